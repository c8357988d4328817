#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "ddnet/channel.hpp"
#include "ddnet/federated.hpp"
#include "ddnet/idetnet.hpp"
#include "ddnet/oampnet.hpp"
#include "ddnet/routenet.hpp"
#include "ddnet/train.hpp"

namespace ddnet {

struct TrainBudget {
    int epochs_id = 25;
    int epochs_oa = 8;
    int epochs_ro = 15;
    int batch_size = 32;
    double lr = 1e-3;
    int patience = 20;
    double validation_fraction = 0.1;
};

struct FedSettings {
    int m_id = 8;
    int m_ro = 16;
    int local_steps = 1;
    int t_id = 25;
    int t_ro = 15;
    double delta = 1.0;
    int bits_per_float = 32;
};

struct EvalSettings {
    std::vector<double> snr_points = {-5.0, 0.0, 5.0, 10.0, 15.0};
    std::vector<int> n_r_points = {4, 5, 6, 7, 8};
    std::vector<double> rho_points = {0.0, 0.3, 0.6, 0.9};
    int samples_per_point = 400;
    int n_r_fixed = 6;
    double rho_fixed = 0.0;
    double snr_fixed = 10.0;
};

struct DataSettings {
    int clients = 20;
    int samples_per_client = 128;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "runs/default";
    std::string mode = "cl";  // cl | fedave | fedgs
    double xi = 0.5;
    SystemConfig system;
    IDetNetConfig idetnet;    // n_t mirrored from system on parse
    OAMPNetConfig oampnet;
    RouteNetConfig routenet;
    DataSettings data;
    TrainBudget train;
    FedSettings fed;
    EvalSettings eval;

    void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Every field defaults; unknown keys are rejected with their path.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// Trained models plus the feature normalization they were trained with.
struct ModelBundle {
    IDetNetParams idet;
    OAMPNetParams oamp;
    RouteNetParams route;
    NormStats stats;
};

void save_bundle(const std::string& dir, const ModelBundle& bundle, const ExperimentConfig& cfg);
ModelBundle load_bundle(const std::string& dir, const ExperimentConfig& cfg);

// Per-sample loss adapters used by both the centralized and federated paths.
SampleLossFn idetnet_loss_fn(const std::vector<Sample>& samples, const IDetNetConfig& cfg);
SampleLossFn oampnet_loss_fn(const std::vector<Sample>& samples, const OAMPNetConfig& cfg);
SampleLossFn routenet_loss_fn(const std::vector<RouteSample>& samples, double xi);

LocalObjective make_objective(const std::vector<Tensor>& like, const SampleLossFn& fn,
                              std::size_t n_samples, const std::vector<std::size_t>& trainable);

// Commands; they throw on runtime failure, the CLI maps that to exit code 2.
void cmd_gen_data(const ExperimentConfig& cfg);
void cmd_train_cl(const ExperimentConfig& cfg);
void cmd_train_fedave(const ExperimentConfig& cfg);
void cmd_train_fedgs(const ExperimentConfig& cfg);
void cmd_eval(const ExperimentConfig& cfg, const std::string& axis);
void cmd_report(const std::string& run_dir);

}  // namespace ddnet
