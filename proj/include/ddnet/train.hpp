#pragma once

#include <functional>
#include <vector>

#include "ddnet/autodiff.hpp"
#include "ddnet/optim.hpp"
#include "ddnet/rng.hpp"
#include "ddnet/tensor.hpp"

namespace ddnet {

/// Builds the loss of one sample on a fresh tape. Samples are indexed so the
/// trainer can shuffle and split without knowing the sample type.
using SampleLossFn = std::function<Var(Tape&, const std::vector<Var>&, std::size_t)>;

struct TrainOptions {
    int epochs = 50;
    int batch_size = 64;
    double lr = 1e-3;
    int patience = 20;
    double validation_fraction = 0.1;
    std::uint64_t seed = 1;
    /// Abort with a diagnostic when the loss stops being finite.
    bool abort_on_divergence = true;
};

struct TrainLogEntry {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<TrainLogEntry> log;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

/// Mean loss over the given sample indices.
double mean_loss(const std::vector<Tensor>& params, const SampleLossFn& fn,
                 const std::vector<std::size_t>& indices);

/// Mean loss and its gradient (one tensor per parameter; frozen parameters
/// receive zero gradient when excluded via `trainable`).
std::pair<double, std::vector<Tensor>> loss_and_grad(
    const std::vector<Tensor>& params, const SampleLossFn& fn,
    const std::vector<std::size_t>& indices, const std::vector<std::size_t>& trainable);

/// Minibatch ADAM with the plateau learning-rate rule on a held-out split.
TrainResult train_minibatch(std::vector<Tensor>& params,
                            const std::vector<std::size_t>& trainable,
                            std::size_t n_samples, const SampleLossFn& fn,
                            const TrainOptions& opt);

}  // namespace ddnet
