#include "ddnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ddnet {

double mean_loss(const std::vector<Tensor>& params, const SampleLossFn& fn,
                 const std::vector<std::size_t>& indices) {
    check(!indices.empty(), "mean_loss: empty index set");
    double total = 0.0;
    for (std::size_t idx : indices) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(params.size());
        for (const Tensor& p : params) vars.push_back(tape.constant(p));
        total += tape.val(fn(tape, vars, idx)).item();
    }
    return total / static_cast<double>(indices.size());
}

std::pair<double, std::vector<Tensor>> loss_and_grad(
    const std::vector<Tensor>& params, const SampleLossFn& fn,
    const std::vector<std::size_t>& indices, const std::vector<std::size_t>& trainable) {
    check(!indices.empty(), "loss_and_grad: empty index set");
    double total = 0.0;
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const Tensor& p : params) grads.push_back(Tensor::zeros(p.shape));

    for (std::size_t idx : indices) {
        Tape tape;
        std::vector<Var> vars;
        std::vector<Var> leaves;
        vars.reserve(params.size());
        leaves.reserve(trainable.size());
        for (const Tensor& p : params) vars.push_back(tape.leaf(p));
        for (std::size_t t : trainable) leaves.push_back(vars[t]);
        Var loss = fn(tape, vars, idx);
        total += tape.val(loss).item();
        std::vector<Tensor> g = tape.gradients(loss, leaves);
        for (std::size_t j = 0; j < trainable.size(); ++j) {
            Tensor& acc = grads[trainable[j]];
            for (std::size_t e = 0; e < acc.size(); ++e) acc.data[e] += g[j].data[e];
        }
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    total *= inv;
    for (std::size_t t : trainable)
        for (std::size_t e = 0; e < grads[t].size(); ++e) grads[t].data[e] *= inv;
    return {total, grads};
}

TrainResult train_minibatch(std::vector<Tensor>& params,
                            const std::vector<std::size_t>& trainable,
                            std::size_t n_samples, const SampleLossFn& fn,
                            const TrainOptions& opt) {
    check(n_samples >= 2, "train_minibatch: need at least 2 samples");
    check(opt.batch_size >= 1, "train_minibatch: batch_size must be positive");
    check(opt.validation_fraction >= 0.0 && opt.validation_fraction < 1.0,
          "train_minibatch: validation_fraction out of range");

    Rng rng(opt.seed);
    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n_samples - 1; i > 0; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)));
        std::swap(order[i], order[j]);
    }
    std::size_t n_val =
        static_cast<std::size_t>(std::floor(opt.validation_fraction * static_cast<double>(n_samples)));
    if (n_val == 0 && opt.validation_fraction > 0.0) n_val = 1;
    if (n_val >= n_samples) n_val = n_samples - 1;
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<long>(n_val));
    std::vector<std::size_t> train(order.begin() + static_cast<long>(n_val), order.end());

    AdamState adam;
    adam.init_like(params);
    adam.lr = opt.lr;
    adam.patience = opt.patience;

    TrainResult result;
    result.initial_loss = mean_loss(params, fn, train);

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        for (std::size_t i = train.size() - 1; i > 0; --i) {
            std::size_t j =
                static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)));
            std::swap(train[i], train[j]);
        }
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < train.size();
             start += static_cast<std::size_t>(opt.batch_size)) {
            std::size_t end =
                std::min(train.size(), start + static_cast<std::size_t>(opt.batch_size));
            std::vector<std::size_t> batch(train.begin() + static_cast<long>(start),
                                           train.begin() + static_cast<long>(end));
            auto [loss, grads] = loss_and_grad(params, fn, batch, trainable);
            if (!std::isfinite(loss)) {
                if (opt.abort_on_divergence)
                    throw std::runtime_error("train_minibatch: loss diverged (non-finite)");
                return result;
            }
            adam.step(params, grads);
            epoch_loss += loss;
            ++n_batches;
        }
        epoch_loss /= static_cast<double>(std::max<std::size_t>(n_batches, 1));

        TrainLogEntry entry;
        entry.epoch = epoch;
        entry.train_loss = epoch_loss;
        entry.val_loss = val.empty() ? epoch_loss : mean_loss(params, fn, val);
        adam.observe_validation(entry.val_loss);
        entry.lr = adam.lr;
        result.log.push_back(entry);
        result.final_loss = epoch_loss;
    }
    return result;
}

}  // namespace ddnet
