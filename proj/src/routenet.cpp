#include "ddnet/routenet.hpp"

#include <algorithm>
#include <cmath>

#include "ddnet/detectors.hpp"

namespace ddnet {

Tensor raw_route_features(const Sample& s, int n_t) {
    check(int(s.H.cols()) == 2 * n_t, "raw_route_features: H shape mismatch");
    const Tensor hth = matmul(transpose(s.H), s.H);
    Tensor f = Tensor::zeros({std::size_t(4 * n_t * n_t + 2)});
    f(0) = s.sigma2;
    std::copy(hth.data.begin(), hth.data.end(), f.data.begin() + 1);
    // N_r inferred from the shape of H.
    f(f.size() - 1) = double(s.H.rows()) / 2.0;
    return f;
}

NormStats compute_norm_stats(const std::vector<Sample>& samples, int n_t) {
    check(!samples.empty(), "compute_norm_stats: empty dataset");
    NormStats st;
    st.lo = raw_route_features(samples.front(), n_t);
    st.hi = st.lo;
    for (std::size_t k = 1; k < samples.size(); ++k) {
        const Tensor f = raw_route_features(samples[k], n_t);
        for (std::size_t i = 0; i < f.size(); ++i) {
            st.lo(i) = std::min(st.lo(i), f(i));
            st.hi(i) = std::max(st.hi(i), f(i));
        }
    }
    return st;
}

Tensor normalize(const Tensor& s, const NormStats& stats) {
    check(s.same_shape(stats.lo), "normalize: stats do not cover input");
    Tensor out = s;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double span = stats.hi(i) - stats.lo(i);
        out(i) = span > 0.0 ? (s(i) - stats.lo(i)) / span : 0.0;
    }
    return out;
}

Tensor build_route_input(const Sample& s, const NormStats& stats, int n_t) {
    const Tensor f = normalize(raw_route_features(s, n_t), stats);
    const std::size_t sq = std::size_t(4 * n_t * n_t);
    Tensor in = Tensor::zeros({sq + 2 * std::size_t(n_t)});
    // sigma2 and N_r each expanded to length n_t so the dense layer cannot
    // ignore them next to the 4 n_t^2 channel entries.
    for (int i = 0; i < n_t; ++i) in(std::size_t(i)) = f(0);
    std::copy(f.data.begin() + 1, f.data.begin() + 1 + std::ptrdiff_t(sq),
              in.data.begin() + n_t);
    for (int i = 0; i < n_t; ++i) in(std::size_t(n_t) + sq + std::size_t(i)) = f(f.size() - 1);
    return in;
}

RouteNetParams init_routenet(const RouteNetConfig& cfg, Rng& rng) {
    RouteNetParams p;
    p.cfg = cfg;
    auto gauss = [&](std::vector<std::size_t> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (double& v : t.data) v = rng.gaussian(0.0, 0.1);
        return t;
    };
    p.tensors.push_back(gauss({std::size_t(cfg.hidden), std::size_t(cfg.input_len())}));
    p.tensors.push_back(gauss({std::size_t(cfg.hidden)}));
    p.tensors.push_back(gauss({2, std::size_t(cfg.hidden)}));
    p.tensors.push_back(gauss({2}));
    return p;
}

long long routenet_param_count(const RouteNetConfig& cfg) {
    return (long long)(cfg.hidden) * cfg.input_len() + cfg.hidden + 2LL * cfg.hidden + 2;
}

Var routenet_logits(Tape& tape, const std::vector<Var>& pvars, Var input) {
    check(pvars.size() == 4, "routenet_logits: parameter count mismatch");
    Var h = tape.sigmoid(tape.add(tape.matmul(pvars[0], input), pvars[1]));
    return tape.add(tape.matmul(pvars[2], h), pvars[3]);
}

int route_pred_from_logits(const Tensor& logits) {
    return logits(1) > logits(0) ? 1 : 0;
}

std::pair<Tensor, int> routenet_forward(const RouteNetParams& params, const Tensor& input) {
    Tape tape;
    std::vector<Var> pvars;
    for (const Tensor& t : params.tensors) pvars.push_back(tape.leaf(t));
    Var logits = routenet_logits(tape, pvars, tape.constant(input));
    Var soft = tape.softmax(logits);
    return {tape.val(soft), route_pred_from_logits(tape.val(logits))};
}

int route_label(int be_id, int be_oa) {
    check(be_id >= 0 && be_oa >= 0, "route_label: negative bit errors");
    return be_id <= be_oa ? 0 : 1;
}

int route_label_eps(int be_1, int be_2, double eps) {
    return double(be_1) - double(be_2) <= eps ? 0 : 1;
}

std::vector<RouteSample> build_route_dataset(const Dataset& ds, const IDetNetParams& idp,
                                             const OAMPNetParams& oap, const NormStats& stats) {
    std::vector<RouteSample> out;
    out.reserve(ds.samples.size());
    for (const Sample& s : ds.samples) {
        RouteSample r;
        r.be_id = bit_errors(idetnet_infer(idp, s.H, s.y), s.x);
        r.be_oa = bit_errors(oampnet_infer(oap, s.H, s.y, s.sigma2), s.x);
        r.label = route_label(r.be_id, r.be_oa);
        r.input = build_route_input(s, stats, idp.cfg.n_t);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RouteSample> balance_route_dataset(std::vector<RouteSample> rs, Rng& rng) {
    std::vector<std::size_t> idx0, idx1;
    for (std::size_t i = 0; i < rs.size(); ++i) (rs[i].label == 0 ? idx0 : idx1).push_back(i);
    check(!idx0.empty() && !idx1.empty(),
          "balance_route_dataset: one route class is empty; generate more data");
    auto& majority = idx0.size() >= idx1.size() ? idx0 : idx1;
    const std::size_t target = std::min(idx0.size(), idx1.size());
    // Remove uniformly-random excess majority samples before any shuffling.
    while (majority.size() > target) {
        const std::size_t pick = std::size_t(rng.uniform_int(0, int(majority.size()) - 1));
        majority.erase(majority.begin() + std::ptrdiff_t(pick));
    }
    std::vector<std::size_t> keep;
    keep.insert(keep.end(), idx0.begin(), idx0.end());
    keep.insert(keep.end(), idx1.begin(), idx1.end());
    std::sort(keep.begin(), keep.end());
    std::vector<RouteSample> out;
    out.reserve(keep.size());
    for (std::size_t i : keep) out.push_back(std::move(rs[i]));
    return out;
}

Var routenet_sample_loss(Tape& tape, Var r_soft, int label, int be_id, int be_oa, double xi) {
    check(xi >= 0.0, "routenet_sample_loss: xi must be nonnegative");
    const Tensor& soft = tape.val(r_soft);
    check(soft.size() == 2, "routenet_sample_loss: two-branch soft output required");
    // Standard (positive) categorical cross-entropy with a 1e-12 log floor.
    Var floored = tape.max_const(r_soft, 1e-12);
    Tensor onehot = Tensor::zeros({2});
    onehot(std::size_t(label)) = 1.0;
    Var ce = tape.scale_const(tape.sum(tape.mul(tape.constant(onehot), tape.log_(floored))), -1.0);
    // Differentiable expected-bit-error surrogate for the hard-routed penalty.
    Tensor be = Tensor::vector({double(be_id), double(be_oa)});
    Var expected = tape.sum(tape.mul(tape.constant(be), r_soft));
    Var penalty = tape.add_const(expected, -double(std::min(be_id, be_oa)));
    return tape.add(ce, tape.scale_const(penalty, xi));
}

DDNetResult ddnet_detect(const Sample& s, const IDetNetParams& idp, const OAMPNetParams& oap,
                         const RouteNetParams& rop, const NormStats& stats) {
    const Tensor input = build_route_input(s, stats, rop.cfg.n_t);
    const int branch = routenet_forward(rop, input).second;
    DDNetResult res;
    res.branch = branch;
    // Conditional computation: only the selected branch runs.
    if (branch == 0)
        res.x_hat = quantize(idetnet_infer(idp, s.H, s.y));
    else
        res.x_hat = quantize(oampnet_infer(oap, s.H, s.y, s.sigma2));
    return res;
}

namespace {
long long inverse_flops(long long n) { return 2 * n * n * n / 3; }  // LU leading term
}

long long flops_lmmse(int n_t, int n_r) {
    const long long n = 2 * n_t, m = 2 * n_r;
    return n * n * m        // H^T H
           + n * m          // H^T y
           + inverse_flops(n) + n * n;
}

long long flops_idetnet(const IDetNetConfig& cfg, int n_r) {
    const long long n = 2 * cfg.n_t, m = 2 * n_r;
    const long long per_layer = (long long)cfg.h1 * cfg.input_width()  // Dense1
                                + (long long)cfg.h2 * cfg.h1           // Dense2
                                + n * cfg.h1                           // Dense3
                                + n * n                                // H^T H x
                                + 2 * n                                // lss divisions
                                + 2 * (cfg.h2 + n);                    // smoothing
    return n * n * m + n * m + per_layer * cfg.k_id;
}

long long flops_oampnet(const OAMPNetConfig& cfg, int n_r) {
    const long long n = 2 * cfg.n_t, m = 2 * n_r;
    const long long per_layer = m * n                 // H x
                                + m * m               // v^2 HH^T
                                + inverse_flops(m)    // (v^2 HH^T + R_n)^{-1}
                                + n * m * m           // H^T W^{-1}
                                + n * m * n           // B H
                                + n * m               // A r
                                + 3 * n;              // denoiser and gammas
    return m * m * n  // HH^T once
           + per_layer * cfg.k_oa;
}

long long flops_routenet(const RouteNetConfig& cfg, int n_r) {
    const long long n = 2 * cfg.n_t, m = 2 * n_r;
    return n * n * m  // H^T H for the input features
           + cfg.input_len()  // normalization divisions
           + (long long)cfg.hidden * cfg.input_len() + 2LL * cfg.hidden;
}

long long flops_ddnet(const IDetNetConfig& id_cfg, const OAMPNetConfig& oa_cfg,
                      const RouteNetConfig& ro_cfg, int n_r, int branch) {
    return flops_routenet(ro_cfg, n_r) +
           (branch == 0 ? flops_idetnet(id_cfg, n_r) : flops_oampnet(oa_cfg, n_r));
}

}  // namespace ddnet
