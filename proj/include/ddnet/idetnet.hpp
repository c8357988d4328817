#pragma once

#include <vector>

#include "ddnet/autodiff.hpp"
#include "ddnet/rng.hpp"
#include "ddnet/tensor.hpp"

namespace ddnet {

struct IDetNetConfig {
    int k_id = 40;  // layer count
    int h1 = 64;    // first dense width
    int h2 = 32;    // second/third dense width and width of v
    int n_t = 4;
    /// DetNet-like ablation: beta fixed, smoothing factors frozen at zero.
    bool detnet_compat = false;
    double beta_fixed = 0.7;

    int input_width() const { return h2 + 6 * n_t; }
    void validate() const;
};

/// Per layer k (canonical tensor order): W1 (h1 x (h2+6n_t)), b1 (h1),
/// W2 (h2 x h1), b2 (h2), W3 (2n_t x h1), b3 (2n_t), beta, alpha1, alpha2.
struct IDetNetParams {
    IDetNetConfig cfg;
    std::vector<Tensor> tensors;

    static constexpr int kPerLayer = 9;
    /// Indices of trainable tensors (compat mode freezes beta and alphas).
    std::vector<std::size_t> trainable_indices() const;
};

/// Element-wise linear soft sign: -1 + ReLU(s+beta)/|beta| - ReLU(s-beta)/|beta|.
Var lss(Tape& tape, Var s, Var beta);
/// (1-alpha) s_new + alpha s_old.
Var smooth(Tape& tape, Var s_new, Var s_old, Var alpha);

IDetNetParams init_idetnet(const IDetNetConfig& cfg, Rng& rng);

/// Trainable-scalar count of the full model; compat mode has 3*K fewer.
long long idetnet_param_count(const IDetNetConfig& cfg);

/// Returns the per-layer estimates x_2 .. x_{K+1} (the last is the output).
std::vector<Var> idetnet_forward(Tape& tape, const std::vector<Var>& pvars,
                                 const Tensor& H, const Tensor& y, const IDetNetConfig& cfg);

/// Sum over layers 2..K+1 of ||x_k - x||^2 for one sample.
Var idetnet_sample_loss(Tape& tape, const std::vector<Var>& estimates, const Tensor& x);

/// Convenience inference: final estimate only.
Tensor idetnet_infer(const IDetNetParams& params, const Tensor& H, const Tensor& y);

}  // namespace ddnet
