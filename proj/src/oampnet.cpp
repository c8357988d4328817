#include "ddnet/oampnet.hpp"

#include <cmath>

namespace ddnet {

namespace {
constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kInvSqrt2 = 0.70710678118654752440;
}  // namespace

void OAMPNetConfig::validate() const {
    check(k_oa >= 1 && n_t >= 1, "OAMPNetConfig: sizes must be positive");
    check(v_floor > 0.0 && tau_floor > 0.0, "OAMPNetConfig: floors must be positive");
}

Var mmse_denoiser(Tape& tape, Var z, Var tau2) {
    check(tape.val(tau2).item() > 0.0, "mmse_denoiser: tau2 must be positive");
    Var inv = tape.div(tape.constant(Tensor::scalar(1.0)), tau2);
    return tape.scale_const(tape.tanh_(tape.scale_const(tape.mul_scalar(z, inv), kSqrt2)),
                            kInvSqrt2);
}

Tensor mmse_denoiser_plain(const Tensor& z, double tau2) {
    check(tau2 > 0.0, "mmse_denoiser: tau2 must be positive");
    Tensor out = z;
    for (double& v : out.data) v = kInvSqrt2 * std::tanh(kSqrt2 * v / tau2);
    return out;
}

OAMPNetParams init_oampnet(const OAMPNetConfig& cfg) {
    cfg.validate();
    OAMPNetParams p;
    p.cfg = cfg;
    for (int k = 0; k < cfg.k_oa; ++k) {
        p.tensors.push_back(Tensor::scalar(1.0));
        p.tensors.push_back(Tensor::scalar(1.0));
        p.tensors.push_back(Tensor::scalar(1.0));
        p.tensors.push_back(Tensor::scalar(0.0));
    }
    return p;
}

std::vector<Var> oampnet_forward(Tape& tape, const std::vector<Var>& pvars,
                                 const Tensor& H, const Tensor& y, double sigma2,
                                 const OAMPNetConfig& cfg) {
    check(int(pvars.size()) == 4 * cfg.k_oa, "oampnet_forward: parameter count mismatch");
    check(H.rank() == 2 && int(H.cols()) == 2 * cfg.n_t, "oampnet_forward: H shape mismatch");
    check(sigma2 >= 0.0, "oampnet_forward: sigma2 must be nonnegative");

    const double sigma2_eff = sigma2 / 2.0;  // real-domain per-component variance
    const std::size_t m = H.rows();          // 2*n_r
    const std::size_t n = H.cols();          // 2*n_t
    const double two_nt = double(n);

    const Tensor ht_plain = transpose(H);
    const double tr_hth = trace(matmul(ht_plain, H));
    const double tr_rn = sigma2_eff * double(m);

    Var hc = tape.constant(H);
    Var htc = tape.constant(ht_plain);
    Var hht = tape.constant(matmul(H, ht_plain));
    Var rn = tape.constant(scale(Tensor::identity(m), sigma2_eff));
    Var eye_n = tape.constant(Tensor::identity(n));
    Var yc = tape.constant(y);

    Var xhat = tape.constant(Tensor::zeros({n}));
    std::vector<Var> estimates;
    estimates.reserve(std::size_t(cfg.k_oa));

    for (int k = 0; k < cfg.k_oa; ++k) {
        Var g1 = pvars[std::size_t(4 * k) + 0];
        Var g2 = pvars[std::size_t(4 * k) + 1];
        Var g3 = pvars[std::size_t(4 * k) + 2];
        Var g4 = pvars[std::size_t(4 * k) + 3];

        Var resid = tape.sub(yc, tape.matmul(hc, xhat));
        Var v2 = tape.max_const(
            tape.scale_const(tape.add_const(tape.norm2sq(resid), -tr_rn), 1.0 / tr_hth),
            cfg.v_floor);

        // W = v^2 H H^T + R_n; B = H^T W^{-1}; A = 2N_t B / tr(B H).
        Var w = tape.add(tape.mul_scalar(hht, v2), rn);
        Var b = tape.matmul(htc, tape.inverse(w));
        Var bh = tape.matmul(b, hc);
        Var a_scale = tape.div(tape.constant(Tensor::scalar(two_nt)), tape.trace(bh));
        Var a = tape.mul_scalar(b, a_scale);

        Var z = tape.add(xhat, tape.mul_scalar(tape.matmul(a, resid), g1));
        Var c = tape.sub(eye_n, tape.mul_scalar(tape.mul_scalar(bh, a_scale), g2));

        Var tau2 = tape.max_const(
            tape.scale_const(
                tape.add(tape.mul(tape.norm2sq(c), v2),
                         tape.scale_const(tape.norm2sq(a), sigma2_eff)),
                1.0 / two_nt),
            cfg.tau_floor);

        Var denoised = mmse_denoiser(tape, z, tau2);

        xhat = tape.mul_scalar(tape.sub(denoised, tape.mul_scalar(z, g4)), g3);
        estimates.push_back(xhat);
    }
    return estimates;
}

Var oampnet_sample_loss(Tape& tape, const std::vector<Var>& estimates, const Tensor& x) {
    Var target = tape.constant(x);
    Var loss = tape.constant(Tensor::scalar(0.0));
    for (Var e : estimates) loss = tape.add(loss, tape.norm2sq(tape.sub(e, target)));
    return loss;
}

Tensor oampnet_infer(const OAMPNetParams& params, const Tensor& H, const Tensor& y,
                     double sigma2) {
    Tape tape;
    std::vector<Var> pvars;
    pvars.reserve(params.tensors.size());
    for (const Tensor& t : params.tensors) pvars.push_back(tape.leaf(t));
    auto est = oampnet_forward(tape, pvars, H, y, sigma2, params.cfg);
    return tape.val(est.back());
}

}  // namespace ddnet
