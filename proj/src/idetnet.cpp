#include "ddnet/idetnet.hpp"

#include <cmath>

namespace ddnet {

void IDetNetConfig::validate() const {
    check(k_id >= 1 && h1 >= 1 && h2 >= 1 && n_t >= 1, "IDetNetConfig: all sizes must be positive");
}

std::vector<std::size_t> IDetNetParams::trainable_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const int slot = int(i % kPerLayer);
        if (cfg.detnet_compat && slot >= 6) continue;  // beta, alpha1, alpha2
        idx.push_back(i);
    }
    return idx;
}

Var lss(Tape& tape, Var s, Var beta) {
    check(std::abs(tape.val(beta).item()) > 1e-8, "lss: |beta| too small");
    Var absb = tape.abs_(beta);
    Var inv = tape.div(tape.constant(Tensor::scalar(1.0)), absb);
    Var up = tape.mul_scalar(tape.relu(tape.add_scalar(s, beta)), inv);
    Var down = tape.mul_scalar(tape.relu(tape.add_scalar(s, tape.scale_const(beta, -1.0))), inv);
    return tape.add_const(tape.sub(up, down), -1.0);
}

Var smooth(Tape& tape, Var s_new, Var s_old, Var alpha) {
    Var one_minus = tape.sub(tape.constant(Tensor::scalar(1.0)), alpha);
    return tape.add(tape.mul_scalar(s_new, one_minus), tape.mul_scalar(s_old, alpha));
}

IDetNetParams init_idetnet(const IDetNetConfig& cfg, Rng& rng) {
    cfg.validate();
    IDetNetParams p;
    p.cfg = cfg;
    const std::size_t in = std::size_t(cfg.input_width());
    const std::size_t h1 = std::size_t(cfg.h1), h2 = std::size_t(cfg.h2);
    const std::size_t out = 2 * std::size_t(cfg.n_t);
    auto gauss = [&](std::vector<std::size_t> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (double& v : t.data) v = rng.gaussian(0.0, 0.1);  // variance 0.01
        return t;
    };
    for (int k = 0; k < cfg.k_id; ++k) {
        p.tensors.push_back(gauss({h1, in}));
        p.tensors.push_back(gauss({h1}));
        p.tensors.push_back(gauss({h2, h1}));
        p.tensors.push_back(gauss({h2}));
        p.tensors.push_back(gauss({out, h1}));
        p.tensors.push_back(gauss({out}));
        p.tensors.push_back(Tensor::scalar(cfg.detnet_compat ? cfg.beta_fixed : 0.7));
        const double a0 = cfg.detnet_compat ? 0.0 : 0.8;
        p.tensors.push_back(Tensor::scalar(a0));
        p.tensors.push_back(Tensor::scalar(a0));
    }
    return p;
}

long long idetnet_param_count(const IDetNetConfig& cfg) {
    const long long in = cfg.input_width(), h1 = cfg.h1, h2 = cfg.h2, out = 2 * cfg.n_t;
    const long long per_layer = h1 * in + h1 + h2 * h1 + h2 + out * h1 + out + 3;
    return per_layer * cfg.k_id;
}

std::vector<Var> idetnet_forward(Tape& tape, const std::vector<Var>& pvars,
                                 const Tensor& H, const Tensor& y, const IDetNetConfig& cfg) {
    check(int(pvars.size()) == cfg.k_id * IDetNetParams::kPerLayer,
          "idetnet_forward: parameter count mismatch");
    check(H.rank() == 2 && int(H.cols()) == 2 * cfg.n_t, "idetnet_forward: H shape mismatch");
    check(y.size() == H.rows(), "idetnet_forward: y length mismatch");

    // H^T y and H^T H are sample constants, computed once.
    const Tensor ht = transpose(H);
    Var hty = tape.constant(matmul(ht, y));
    Var hth = tape.constant(matmul(ht, H));

    Var v = tape.constant(Tensor::zeros({std::size_t(cfg.h2)}));
    Var xhat = tape.constant(Tensor::zeros({2 * std::size_t(cfg.n_t)}));

    std::vector<Var> estimates;
    estimates.reserve(std::size_t(cfg.k_id));
    for (int k = 0; k < cfg.k_id; ++k) {
        const std::size_t base = std::size_t(k) * IDetNetParams::kPerLayer;
        Var w1 = pvars[base + 0], b1 = pvars[base + 1];
        Var w2 = pvars[base + 2], b2 = pvars[base + 3];
        Var w3 = pvars[base + 4], b3 = pvars[base + 5];
        Var beta = pvars[base + 6], a1 = pvars[base + 7], a2 = pvars[base + 8];

        Var in = tape.concat({v, hty, tape.matmul(hth, xhat), xhat});
        Var z = tape.relu(tape.add(tape.matmul(w1, in), b1));
        v = smooth(tape, tape.add(tape.matmul(w2, z), b2), v, a1);
        Var soft = lss(tape, tape.add(tape.matmul(w3, z), b3), beta);
        xhat = smooth(tape, soft, xhat, a2);
        estimates.push_back(xhat);
    }
    return estimates;
}

Var idetnet_sample_loss(Tape& tape, const std::vector<Var>& estimates, const Tensor& x) {
    Var target = tape.constant(x);
    Var loss = tape.constant(Tensor::scalar(0.0));
    for (Var e : estimates) loss = tape.add(loss, tape.norm2sq(tape.sub(e, target)));
    return loss;
}

Tensor idetnet_infer(const IDetNetParams& params, const Tensor& H, const Tensor& y) {
    Tape tape;
    std::vector<Var> pvars;
    pvars.reserve(params.tensors.size());
    for (const Tensor& t : params.tensors) pvars.push_back(tape.leaf(t));
    auto est = idetnet_forward(tape, pvars, H, y, params.cfg);
    return tape.val(est.back());
}

}  // namespace ddnet
