#pragma once

#include <limits>
#include <vector>

#include "ddnet/tensor.hpp"

namespace ddnet {

/// ADAM with bias correction and a plateau learning-rate rule: the rate decays
/// by 0.9 whenever the validation loss fails to improve for `patience`
/// consecutive epochs.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr = 1e-3;
    long step_count = 0;

    int patience = 20;
    double decay = 0.9;
    int stale_epochs = 0;
    double best_loss = std::numeric_limits<double>::infinity();

    std::vector<Tensor> m, v;

    void init_like(const std::vector<Tensor>& params);
    void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

    /// Feed one validation-loss observation; applies the plateau decay.
    void observe_validation(double loss);
};

}  // namespace ddnet
