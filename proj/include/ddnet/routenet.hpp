#pragma once

#include <vector>

#include "ddnet/autodiff.hpp"
#include "ddnet/channel.hpp"
#include "ddnet/idetnet.hpp"
#include "ddnet/oampnet.hpp"
#include "ddnet/rng.hpp"

namespace ddnet {

struct RouteNetConfig {
    int n_t = 4;
    int hidden = 128;
    int feature_len() const { return 4 * n_t * n_t + 2; }       // [sigma2, vec(H^T H), n_r]
    int input_len() const { return 4 * n_t * n_t + 2 * n_t; }   // after expansion
};

/// Tensor order: W1 (hidden x input_len), b1, W2 (2 x hidden), b2.
struct RouteNetParams {
    RouteNetConfig cfg;
    std::vector<Tensor> tensors;
};

/// Element-wise dataset min/max over the raw feature vector
/// [sigma2, vec(H^T H), n_r]; degenerate components normalize to 0 and
/// out-of-range values extrapolate linearly (no clipping).
struct NormStats {
    Tensor lo, hi;
};

struct RouteSample {
    Tensor input;   // normalized, expanded RouteNet input
    int label = 0;  // 0 = IDetNet, 1 = OAMPNet
    int be_id = 0;
    int be_oa = 0;
};

Tensor raw_route_features(const Sample& s, int n_t);
NormStats compute_norm_stats(const std::vector<Sample>& samples, int n_t);
Tensor normalize(const Tensor& s, const NormStats& stats);
Tensor build_route_input(const Sample& s, const NormStats& stats, int n_t);

RouteNetParams init_routenet(const RouteNetConfig& cfg, Rng& rng);
long long routenet_param_count(const RouteNetConfig& cfg);

/// Logits of the two branches (before softmax).
Var routenet_logits(Tape& tape, const std::vector<Var>& pvars, Var input);
/// argmax of the logits; ties pick branch 0 (the cheaper IDetNet).
int route_pred_from_logits(const Tensor& logits);
/// Inference: (soft probabilities, predicted branch).
std::pair<Tensor, int> routenet_forward(const RouteNetParams& params, const Tensor& input);

int route_label(int be_id, int be_oa);            // 0 if be_id <= be_oa
int route_label_eps(int be_1, int be_2, double eps);

std::vector<RouteSample> build_route_dataset(const Dataset& ds, const IDetNetParams& idp,
                                             const OAMPNetParams& oap, const NormStats& stats);
std::vector<RouteSample> balance_route_dataset(std::vector<RouteSample> rs, Rng& rng);

/// Cross-entropy against the one-hot label plus the penalty surrogate
/// xi * (rSoft[0] be_id + rSoft[1] be_oa - min(be_id, be_oa)).
Var routenet_sample_loss(Tape& tape, Var r_soft, int label, int be_id, int be_oa, double xi);

struct DDNetResult {
    Tensor x_hat;    // quantized
    int branch = 0;  // 0 = IDetNet, 1 = OAMPNet
};

/// Runs RouteNet, then executes exactly the selected branch.
DDNetResult ddnet_detect(const Sample& s, const IDetNetParams& idp, const OAMPNetParams& oap,
                         const RouteNetParams& rop, const NormStats& stats);

// Multiplication/division counts of the implemented arithmetic paths.
long long flops_lmmse(int n_t, int n_r);
long long flops_idetnet(const IDetNetConfig& cfg, int n_r);
long long flops_oampnet(const OAMPNetConfig& cfg, int n_r);
long long flops_routenet(const RouteNetConfig& cfg, int n_r);
long long flops_ddnet(const IDetNetConfig& id_cfg, const OAMPNetConfig& oa_cfg,
                      const RouteNetConfig& ro_cfg, int n_r, int branch);

}  // namespace ddnet
