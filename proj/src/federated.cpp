#include "ddnet/federated.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ddnet {

std::uint64_t OverheadLedger::total_broadcast() const {
    std::uint64_t acc = 0;
    for (const auto& [name, p] : phases) acc += p.bits_broadcast;
    return acc;
}
std::uint64_t OverheadLedger::total_upload() const {
    std::uint64_t acc = 0;
    for (const auto& [name, p] : phases) acc += p.bits_upload;
    return acc;
}
std::uint64_t OverheadLedger::total_index() const {
    std::uint64_t acc = 0;
    for (const auto& [name, p] : phases) acc += p.bits_index;
    return acc;
}

Tensor flatten(const std::vector<Tensor>& tensors) {
    std::size_t total = 0;
    for (const Tensor& t : tensors) total += t.size();
    Tensor out = Tensor::zeros({total});
    std::size_t off = 0;
    for (const Tensor& t : tensors) {
        std::copy(t.data.begin(), t.data.end(), out.data.begin() + std::ptrdiff_t(off));
        off += t.size();
    }
    return out;
}

std::vector<Tensor> unflatten(const Tensor& flat, const std::vector<Tensor>& like) {
    std::vector<Tensor> out;
    out.reserve(like.size());
    std::size_t off = 0;
    for (const Tensor& t : like) {
        Tensor piece = Tensor::zeros(t.shape);
        std::copy(flat.data.begin() + std::ptrdiff_t(off),
                  flat.data.begin() + std::ptrdiff_t(off + t.size()), piece.data.begin());
        off += t.size();
        out.push_back(std::move(piece));
    }
    check(off == flat.size(), "unflatten: size mismatch");
    return out;
}

std::vector<Tensor> local_update(const LocalObjective& objective,
                                 std::vector<Tensor> params, int local_steps, double lr) {
    check(local_steps >= 1, "local_update: local_steps must be >= 1");
    AdamState adam;
    adam.lr = lr;
    adam.init_like(params);
    for (int s = 0; s < local_steps; ++s) adam.step(params, objective.grad(params));
    return params;
}

std::vector<Tensor> aggregate_weighted(const std::vector<std::vector<Tensor>>& params,
                                       const std::vector<std::size_t>& sizes) {
    check(!params.empty() && params.size() == sizes.size(), "aggregate_weighted: empty input");
    double total = 0.0;
    for (std::size_t s : sizes) {
        check(s > 0, "aggregate_weighted: zero-size client");
        total += double(s);
    }
    std::vector<Tensor> out;
    for (const Tensor& t : params.front()) out.push_back(Tensor::zeros(t.shape));
    for (std::size_t m = 0; m < params.size(); ++m) {
        const double w = double(sizes[m]) / total;
        for (std::size_t i = 0; i < out.size(); ++i) {
            check(params[m][i].same_shape(out[i]), "aggregate_weighted: shape mismatch");
            for (std::size_t j = 0; j < out[i].size(); ++j)
                out[i].data[j] += w * params[m][i].data[j];
        }
    }
    return out;
}

namespace {

std::vector<int> select_clients(int total, int m, Rng& rng) {
    check(m >= 1 && m <= total, "client selection: M out of range");
    std::vector<int> all(static_cast<std::size_t>(total));
    std::iota(all.begin(), all.end(), 0);
    for (int i = 0; i < m; ++i)
        std::swap(all[std::size_t(i)], all[std::size_t(rng.uniform_int(i, total - 1))]);
    all.resize(std::size_t(m));
    return all;
}

std::uint64_t param_count(const std::vector<Tensor>& params) {
    std::uint64_t q = 0;
    for (const Tensor& t : params) q += t.size();
    return q;
}

}  // namespace

std::vector<Tensor> fedave_train(const std::vector<LocalObjective>& clients,
                                 std::vector<Tensor> params, const FedConfig& cfg, Rng& rng,
                                 OverheadLedger& ledger, const std::string& phase,
                                 const EpochCallback& on_epoch) {
    const std::uint64_t q = param_count(params);
    const std::uint64_t b = std::uint64_t(cfg.bits_per_float);
    auto& lp = ledger.phase(phase);
    for (int t = 1; t <= cfg.global_epochs; ++t) {
        const std::vector<int> selected = select_clients(cfg.total_clients, cfg.m_select, rng);
        lp.bits_broadcast += b * q * std::uint64_t(cfg.m_select);
        std::vector<std::vector<Tensor>> locals;
        std::vector<std::size_t> sizes;
        for (int m : selected) {
            locals.push_back(local_update(clients[std::size_t(m)], params, cfg.local_steps, cfg.lr));
            sizes.push_back(clients[std::size_t(m)].size);
        }
        lp.bits_upload += b * q * std::uint64_t(cfg.m_select);
        params = aggregate_weighted(locals, sizes);
        if (on_epoch) on_epoch(t, params, selected);
    }
    return params;
}

SparsifiedGradient sparsify(const Tensor& g, double delta, Rng& rng) {
    check(delta > 0.0 && delta <= 1.0, "sparsify: delta must be in (0, 1]");
    check(g.all_finite(), "sparsify: gradient must be finite");
    const std::size_t q = g.size();
    SparsifiedGradient out;
    out.q = q;
    out.probs = Tensor::zeros({q});
    out.values = Tensor::zeros({q});
    out.bitmap.assign(q, 0);

    double abs_sum = 0.0;
    for (double v : g.data) abs_sum += std::abs(v);
    if (abs_sum == 0.0) return out;  // all-zero gradient sparsifies to zero

    const double dq = delta * double(q);
    for (std::size_t i = 0; i < q; ++i)
        out.probs(i) = std::min(dq * std::abs(g(i)) / abs_sum, 1.0);

    // Amplify the below-one probabilities until sum(p) reaches delta*Q.
    for (;;) {
        double sum_open = 0.0;
        std::size_t n_open = 0;
        for (std::size_t i = 0; i < q; ++i)
            if (out.probs(i) < 1.0) {
                sum_open += out.probs(i);
                ++n_open;
            }
        if (n_open == 0 || sum_open == 0.0) break;
        const double a = (dq - double(q) + double(n_open)) / sum_open;
        if (a <= 1.0 + 1e-2) break;
        for (std::size_t i = 0; i < q; ++i)
            if (out.probs(i) < 1.0) out.probs(i) = std::min(a * out.probs(i), 1.0);
    }

    for (std::size_t i = 0; i < q; ++i) {
        const double p = out.probs(i);
        if (p > 0.0 && rng.bernoulli(p)) {
            out.bitmap[i] = 1;
            out.values(i) = g(i) / p;
            ++out.selected;
        }
    }
    return out;
}

Tensor fedgs_aggregate(const std::vector<SparsifiedGradient>& sparsified,
                       const std::vector<std::size_t>& sizes) {
    check(!sparsified.empty() && sparsified.size() == sizes.size(), "fedgs_aggregate: empty");
    double total = 0.0;
    for (std::size_t s : sizes) total += double(s);
    Tensor out = Tensor::zeros({sparsified.front().q});
    for (std::size_t m = 0; m < sparsified.size(); ++m) {
        check(sparsified[m].q == out.size(), "fedgs_aggregate: Q mismatch");
        const double w = double(sizes[m]) / total;
        for (std::size_t i = 0; i < out.size(); ++i)
            out(i) += w * sparsified[m].values(i);
    }
    return out;
}

std::vector<Tensor> fedgs_train(const std::vector<LocalObjective>& clients,
                                std::vector<Tensor> params, const FedConfig& cfg, Rng& rng,
                                OverheadLedger& ledger, const std::string& phase,
                                const EpochCallback& on_epoch) {
    const std::uint64_t q = param_count(params);
    const std::uint64_t b = std::uint64_t(cfg.bits_per_float);
    auto& lp = ledger.phase(phase);
    AdamState server_adam;  // moments persist across global epochs
    server_adam.lr = cfg.lr;
    server_adam.init_like(params);
    for (int t = 1; t <= cfg.global_epochs; ++t) {
        const std::vector<int> selected = select_clients(cfg.total_clients, cfg.m_select, rng);
        lp.bits_broadcast += b * q * std::uint64_t(cfg.m_select);
        std::vector<SparsifiedGradient> grads;
        std::vector<std::size_t> sizes;
        for (int m : selected) {
            Rng stream = rng.split(std::uint64_t(m), std::uint64_t(t));
            SparsifiedGradient sg =
                sparsify(flatten(clients[std::size_t(m)].grad(params)), cfg.delta, stream);
            lp.bits_upload += b * std::uint64_t(sg.selected);
            lp.bits_index += std::uint64_t(sg.q);  // one index bit per component per uploader
            grads.push_back(std::move(sg));
            sizes.push_back(clients[std::size_t(m)].size);
        }
        const std::vector<Tensor> g = unflatten(fedgs_aggregate(grads, sizes), params);
        server_adam.step(params, g);
        if (on_epoch) on_epoch(t, params, selected);
    }
    return params;
}

std::uint64_t sample_bits(int n_t, int n_r, int b) {
    const std::uint64_t floats =
        2ull * std::uint64_t(n_r) + 4ull * std::uint64_t(n_t) * std::uint64_t(n_r) +
        2ull * std::uint64_t(n_t) + 1ull;
    return std::uint64_t(b) * floats;
}

std::uint64_t t_cl(const std::vector<std::pair<int, int>>& nt_nr_per_sample, int b) {
    std::uint64_t acc = 0;
    for (const auto& [nt, nr] : nt_nr_per_sample) acc += sample_bits(nt, nr, b);
    return acc;
}

std::uint64_t t_fedave(int b, std::uint64_t q_id, int t_id, int m_id, std::uint64_t q_ro,
                       int t_ro, int m_ro) {
    return 2ull * std::uint64_t(b) * q_id * std::uint64_t(t_id) * std::uint64_t(m_id) +
           2ull * std::uint64_t(b) * q_ro * std::uint64_t(t_ro) * std::uint64_t(m_ro);
}

double t_fedgs(int b, std::uint64_t q_id, int t_id, int m_id, std::uint64_t q_ro, int t_ro,
               int m_ro, double delta) {
    const double upload = double(b) * delta *
                          (double(q_id) * t_id * m_id + double(q_ro) * t_ro * m_ro);
    const double index = double(q_id) * t_id + double(q_ro) * t_ro;
    const double broadcast =
        double(b) * (double(q_id) * t_id * m_id + double(q_ro) * t_ro * m_ro);
    return upload + index + broadcast;
}

}  // namespace ddnet
