#pragma once

#include <vector>

#include "ddnet/autodiff.hpp"
#include "ddnet/tensor.hpp"

namespace ddnet {

struct OAMPNetConfig {
    int k_oa = 8;
    int n_t = 4;
    double v_floor = 1e-9;
    double tau_floor = 1e-9;
    void validate() const;
};

/// Four trainable scalars per layer, order gamma_{k,1..4}.
struct OAMPNetParams {
    OAMPNetConfig cfg;
    std::vector<Tensor> tensors;  // 4*k_oa scalars
};

/// Posterior mean of x in {±1/√2} (equiprobable) under z = x + N(0, tau2):
/// (1/√2) tanh(√2 z / tau2).
Var mmse_denoiser(Tape& tape, Var z, Var tau2);
Tensor mmse_denoiser_plain(const Tensor& z, double tau2);

OAMPNetParams init_oampnet(const OAMPNetConfig& cfg);

/// Per-layer estimates x_2 .. x_{K+1}; sigma2 is the complex-domain noise
/// variance, the layer uses sigma2/2 per real component.
std::vector<Var> oampnet_forward(Tape& tape, const std::vector<Var>& pvars,
                                 const Tensor& H, const Tensor& y, double sigma2,
                                 const OAMPNetConfig& cfg);

Var oampnet_sample_loss(Tape& tape, const std::vector<Var>& estimates, const Tensor& x);

Tensor oampnet_infer(const OAMPNetParams& params, const Tensor& H, const Tensor& y, double sigma2);

}  // namespace ddnet
