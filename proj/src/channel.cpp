#include "ddnet/channel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ddnet {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr std::uint32_t kDatasetMagic = 0x53444444;  // "DDDS"
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

CMat cmatmul(const CMat& a, const CMat& b) {
    return {sub(matmul(a.re, b.re), matmul(a.im, b.im)),
            add(matmul(a.re, b.im), matmul(a.im, b.re))};
}

void SystemConfig::validate() const {
    check(n_t >= 1, "n_t must be >= 1");
    check(n_r_min >= n_t && n_r_max >= n_r_min, "n_r range must lie in [n_t, inf)");
    check(snr_db_max >= snr_db_min, "snr range inverted");
    check(rho_min >= 0.0 && rho_max < 1.0 && rho_max >= rho_min, "rho range must be in [0, 1)");
}

Tensor correlation_matrix(std::size_t n, double rho) {
    check(rho >= 0.0 && rho < 1.0, "correlation coefficient must be in [0, 1)");
    Tensor r = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = double(i) - double(j);
            r(i, j) = std::pow(rho, d * d);
        }
    return r;
}

Tensor matrix_sqrt(const Tensor& r) {
    auto [w, v] = sym_eig(r);
    const std::size_t n = r.rows();
    Tensor s = Tensor::zeros({n, n});
    for (std::size_t k = 0; k < n; ++k) {
        const double sw = std::sqrt(std::max(w(k), 0.0));
        if (sw == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) s(i, j) += sw * v(i, k) * v(j, k);
    }
    return s;
}

CMat generate_channel(int n_t, int n_r, double rho, Rng& rng) {
    check(n_t >= 1 && n_r >= 1, "generate_channel: invalid sizes");
    CMat hg{Tensor::zeros({std::size_t(n_r), std::size_t(n_t)}),
            Tensor::zeros({std::size_t(n_r), std::size_t(n_t)})};
    const double var = 1.0 / double(n_r);
    for (std::size_t i = 0; i < std::size_t(n_r); ++i)
        for (std::size_t j = 0; j < std::size_t(n_t); ++j) {
            const auto g = rng.complex_gaussian(var);
            hg.re(i, j) = g.real();
            hg.im(i, j) = g.imag();
        }
    if (rho == 0.0) return hg;
    // Kronecker form sqrt(R_r) H_g sqrt(R_t); R_t cannot left-multiply an
    // N_r x N_t matrix when N_t != N_r, so the receive factor goes left.
    const Tensor sr = matrix_sqrt(correlation_matrix(std::size_t(n_r), rho));
    const Tensor st = matrix_sqrt(correlation_matrix(std::size_t(n_t), rho));
    CMat left{matmul(sr, hg.re), matmul(sr, hg.im)};
    return {matmul(left.re, st), matmul(left.im, st)};
}

Tensor realify(const CMat& m) {
    const std::size_t r = m.rows(), c = m.cols();
    Tensor out = Tensor::zeros({2 * r, 2 * c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            out(i, j) = m.re(i, j);
            out(i, j + c) = -m.im(i, j);
            out(i + r, j) = m.im(i, j);
            out(i + r, j + c) = m.re(i, j);
        }
    return out;
}

Tensor realify_vec(const std::vector<std::complex<double>>& v) {
    Tensor out = Tensor::zeros({2 * v.size()});
    for (std::size_t i = 0; i < v.size(); ++i) {
        out(i) = v[i].real();
        out(i + v.size()) = v[i].imag();
    }
    return out;
}

Tensor qpsk_modulate(const std::vector<std::uint8_t>& bits) {
    Tensor x = Tensor::zeros({bits.size()});
    for (std::size_t i = 0; i < bits.size(); ++i)
        x(i) = (bits[i] ? 1.0 : -1.0) * kInvSqrt2;
    return x;
}

std::vector<std::uint8_t> qpsk_demodulate(const Tensor& x_hat) {
    std::vector<std::uint8_t> bits(x_hat.size());
    for (std::size_t i = 0; i < x_hat.size(); ++i) bits[i] = x_hat(i) >= 0.0 ? 1 : 0;
    return bits;
}

double snr_to_sigma2(double snr_db, int n_t, int n_r) {
    return double(n_t) / (double(n_r) * std::pow(10.0, snr_db / 10.0));
}

Sample generate_sample(int n_t, int n_r, double rho, double snr_db, Rng& rng) {
    Sample s;
    s.n_r = n_r;
    s.rho = rho;
    s.snr_db = snr_db;
    s.sigma2 = snr_to_sigma2(snr_db, n_t, n_r);

    const CMat ht = generate_channel(n_t, n_r, rho, rng);
    s.H = realify(ht);

    s.bits.resize(2 * std::size_t(n_t));
    for (auto& b : s.bits) b = rng.bernoulli(0.5) ? 1 : 0;
    s.x = qpsk_modulate(s.bits);

    s.y = matmul(s.H, s.x);
    // Real-domain noise: per-component variance sigma2/2.
    const double sd = std::sqrt(s.sigma2 / 2.0);
    for (double& v : s.y.data) v += rng.gaussian(0.0, sd);
    return s;
}

Sample generate_sample(int n_t, const ClientProfile& p, Rng& rng) {
    const int n_r = rng.uniform_int(p.n_r_min, p.n_r_max);
    const double rho = rng.uniform(p.rho_lo, p.rho_hi);
    const double snr = rng.uniform(p.snr_lo, p.snr_hi);
    return generate_sample(n_t, n_r, rho, snr, rng);
}

std::vector<ClientProfile> make_client_profiles(const SystemConfig& cfg, int count, Rng& rng) {
    cfg.validate();
    std::vector<ClientProfile> out;
    out.reserve(std::size_t(count));
    for (int m = 0; m < count; ++m) {
        ClientProfile p;
        p.client_id = m;
        const double rho_len = std::min(0.2, cfg.rho_max - cfg.rho_min);
        p.rho_lo = rng.uniform(cfg.rho_min, cfg.rho_max - rho_len);
        p.rho_hi = p.rho_lo + rho_len;
        const double snr_len = std::min(5.0, cfg.snr_db_max - cfg.snr_db_min);
        p.snr_lo = rng.uniform(cfg.snr_db_min, cfg.snr_db_max - snr_len);
        p.snr_hi = p.snr_lo + snr_len;
        p.n_r_min = cfg.n_r_min;
        p.n_r_max = cfg.n_r_max;
        out.push_back(p);
    }
    return out;
}

Dataset generate_client_dataset(int n_t, const ClientProfile& profile, int count, Rng& rng) {
    check(count >= 1, "dataset must be non-empty");
    Dataset ds;
    ds.origin = "client-" + std::to_string(profile.client_id);
    ds.samples.reserve(std::size_t(count));
    for (int i = 0; i < count; ++i) ds.samples.push_back(generate_sample(n_t, profile, rng));
    return ds;
}

Dataset pool(const std::vector<Dataset>& datasets, Rng& rng) {
    Dataset out;
    out.origin = "pooled";
    for (const Dataset& d : datasets)
        out.samples.insert(out.samples.end(), d.samples.begin(), d.samples.end());
    // Fisher-Yates with the shared stream, so pooling is seed-reproducible.
    for (std::size_t i = out.samples.size(); i > 1; --i)
        std::swap(out.samples[i - 1], out.samples[std::size_t(rng.uniform_int(0, int(i) - 1))]);
    return out;
}

namespace {

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void save_dataset(const Dataset& ds, int n_t, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    check(bool(os), "cannot open dataset file for writing: " + path);
    write_pod(os, kDatasetMagic);
    write_pod(os, kDatasetVersion);
    write_pod(os, std::uint32_t(n_t));
    write_pod(os, std::uint64_t(ds.samples.size()));
    for (const Sample& s : ds.samples) {
        write_pod(os, std::uint32_t(s.n_r));
        write_pod(os, s.rho);
        write_pod(os, s.snr_db);
        write_pod(os, s.sigma2);
        for (double v : s.y.data) write_pod(os, v);
        for (double v : s.H.data) write_pod(os, v);
        for (double v : s.x.data) write_pod(os, v);
        os.write(reinterpret_cast<const char*>(s.bits.data()), std::streamsize(s.bits.size()));
    }
}

Dataset load_dataset(const std::string& path, int* n_t_out) {
    std::ifstream is(path, std::ios::binary);
    check(bool(is), "cannot open dataset file: " + path);
    check(read_pod<std::uint32_t>(is) == kDatasetMagic, "bad dataset magic: " + path);
    check(read_pod<std::uint32_t>(is) == kDatasetVersion, "unsupported dataset version");
    const std::size_t n_t = read_pod<std::uint32_t>(is);
    const std::uint64_t count = read_pod<std::uint64_t>(is);
    if (n_t_out) *n_t_out = int(n_t);
    Dataset ds;
    ds.samples.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        Sample s;
        s.n_r = int(read_pod<std::uint32_t>(is));
        s.rho = read_pod<double>(is);
        s.snr_db = read_pod<double>(is);
        s.sigma2 = read_pod<double>(is);
        s.y = Tensor::zeros({2 * std::size_t(s.n_r)});
        for (double& v : s.y.data) v = read_pod<double>(is);
        s.H = Tensor::zeros({2 * std::size_t(s.n_r), 2 * n_t});
        for (double& v : s.H.data) v = read_pod<double>(is);
        s.x = Tensor::zeros({2 * n_t});
        for (double& v : s.x.data) v = read_pod<double>(is);
        s.bits.resize(2 * n_t);
        is.read(reinterpret_cast<char*>(s.bits.data()), std::streamsize(s.bits.size()));
        ds.samples.push_back(std::move(s));
    }
    check(bool(is), "truncated dataset file: " + path);
    return ds;
}

}  // namespace ddnet
