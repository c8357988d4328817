#include "ddnet/optim.hpp"

#include <cmath>

namespace ddnet {

void AdamState::init_like(const std::vector<Tensor>& params) {
    m.clear();
    v.clear();
    for (const Tensor& p : params) {
        m.push_back(Tensor::zeros(p.shape));
        v.push_back(Tensor::zeros(p.shape));
    }
    step_count = 0;
}

void AdamState::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
    check(params.size() == grads.size(), "adam: params/grads count mismatch");
    if (m.empty()) init_like(params);
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, double(step_count));
    const double bc2 = 1.0 - std::pow(beta2, double(step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        check(params[i].same_shape(grads[i]), "adam: gradient shape mismatch");
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            const double g = grads[i].data[j];
            double& mj = m[i].data[j];
            double& vj = v[i].data[j];
            mj = beta1 * mj + (1.0 - beta1) * g;
            vj = beta2 * vj + (1.0 - beta2) * g * g;
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            params[i].data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void AdamState::observe_validation(double loss) {
    if (loss < best_loss) {
        best_loss = loss;
        stale_epochs = 0;
        return;
    }
    if (++stale_epochs >= patience) {
        lr *= decay;
        stale_epochs = 0;
    }
}

}  // namespace ddnet
