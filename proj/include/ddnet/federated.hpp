#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ddnet/optim.hpp"
#include "ddnet/rng.hpp"
#include "ddnet/tensor.hpp"

namespace ddnet {

/// One client's view of a training objective: full-batch loss and gradient on
/// the local dataset, plus the dataset size used as the aggregation weight.
struct LocalObjective {
    std::size_t size = 0;
    std::function<double(const std::vector<Tensor>&)> loss;
    std::function<std::vector<Tensor>(const std::vector<Tensor>&)> grad;
};

struct FedConfig {
    int total_clients = 20;
    int m_select = 8;       // clients per global epoch
    int local_steps = 1;    // l_m
    int global_epochs = 10;
    double delta = 1.0;     // FedGS sparsity
    int bits_per_float = 32;
    double lr = 1e-3;
};

struct OverheadLedger {
    struct Phase {
        std::uint64_t bits_broadcast = 0;
        std::uint64_t bits_upload = 0;
        std::uint64_t bits_index = 0;
    };
    std::map<std::string, Phase> phases;

    Phase& phase(const std::string& name) { return phases[name]; }
    std::uint64_t total_broadcast() const;
    std::uint64_t total_upload() const;
    std::uint64_t total_index() const;
    std::uint64_t total() const { return total_broadcast() + total_upload() + total_index(); }
};

struct SparsifiedGradient {
    Tensor values;                     // length Q, amplified g_q/p_q or 0
    std::vector<std::uint8_t> bitmap;  // mu
    Tensor probs;                      // p, retained for testing
    std::size_t q = 0;
    std::size_t selected = 0;          // realized nonzero count
};

Tensor flatten(const std::vector<Tensor>& tensors);
std::vector<Tensor> unflatten(const Tensor& flat, const std::vector<Tensor>& like);

/// l_m full-batch ADAM steps from the broadcast parameters with fresh moments.
std::vector<Tensor> local_update(const LocalObjective& objective,
                                 std::vector<Tensor> global_params, int local_steps, double lr);

std::vector<Tensor> aggregate_weighted(const std::vector<std::vector<Tensor>>& params,
                                       const std::vector<std::size_t>& sizes);

using EpochCallback =
    std::function<void(int epoch, const std::vector<Tensor>& params,
                       const std::vector<int>& selected)>;

std::vector<Tensor> fedave_train(const std::vector<LocalObjective>& clients,
                                 std::vector<Tensor> init_params, const FedConfig& cfg,
                                 Rng& rng, OverheadLedger& ledger, const std::string& phase,
                                 const EpochCallback& on_epoch = {});

/// Probability-optimal unbiased sparsification (water-filling approximation by
/// iterative amplification).
SparsifiedGradient sparsify(const Tensor& g, double delta, Rng& rng);

Tensor fedgs_aggregate(const std::vector<SparsifiedGradient>& sparsified,
                       const std::vector<std::size_t>& sizes);

std::vector<Tensor> fedgs_train(const std::vector<LocalObjective>& clients,
                                std::vector<Tensor> init_params, const FedConfig& cfg,
                                Rng& rng, OverheadLedger& ledger, const std::string& phase,
                                const EpochCallback& on_epoch = {});

// Closed-form transmission-overhead arithmetic.
std::uint64_t sample_bits(int n_t, int n_r, int b);
std::uint64_t t_cl(const std::vector<std::pair<int, int>>& nt_nr_per_sample, int b);
std::uint64_t t_fedave(int b, std::uint64_t q_id, int t_id, int m_id, std::uint64_t q_ro,
                       int t_ro, int m_ro);
/// Expected bits; the gradient-upload term b*delta*(...) may be fractional.
double t_fedgs(int b, std::uint64_t q_id, int t_id, int m_id, std::uint64_t q_ro, int t_ro,
               int m_ro, double delta);

}  // namespace ddnet
