#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "ddnet/pipeline.hpp"

namespace {

ddnet::ExperimentConfig load_or_default(const std::string& config_path,
                                        const std::string& output_dir,
                                        const std::string& mode) {
    ddnet::ExperimentConfig cfg =
        config_path.empty() ? ddnet::config_from_json(nlohmann::json::object())
                            : ddnet::load_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (!mode.empty()) cfg.mode = mode;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic MIMO detection network: data generation, training and evaluation"};
    app.require_subcommand(1);

    std::string config_path, output_dir, axis = "snr_db", run_dir;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "Experiment config JSON (defaults used if omitted)");
        sub->add_option("-o,--output-dir", output_dir, "Override the run directory");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "Generate client datasets and the pooled set");
    add_common(gen);
    CLI::App* cl = app.add_subcommand("train-cl", "Centralized training of all three networks");
    add_common(cl);
    CLI::App* fa = app.add_subcommand("train-fedave", "Federated-averaging training");
    add_common(fa);
    CLI::App* fg = app.add_subcommand("train-fedgs", "Federated sparsified-gradient training");
    add_common(fg);
    CLI::App* ev = app.add_subcommand("eval", "BER sweep over one axis with trained checkpoints");
    add_common(ev);
    ev->add_option("-a,--axis", axis, "Sweep axis: snr_db | n_r | rho");
    CLI::App* rp = app.add_subcommand("report", "Merge run artifacts into a summary");
    rp->add_option("run_dir", run_dir, "Run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) ddnet::cmd_gen_data(load_or_default(config_path, output_dir, ""));
        if (cl->parsed()) ddnet::cmd_train_cl(load_or_default(config_path, output_dir, "cl"));
        if (fa->parsed()) ddnet::cmd_train_fedave(load_or_default(config_path, output_dir, "fedave"));
        if (fg->parsed()) ddnet::cmd_train_fedgs(load_or_default(config_path, output_dir, "fedgs"));
        if (ev->parsed()) ddnet::cmd_eval(load_or_default(config_path, output_dir, ""), axis);
        if (rp->parsed()) ddnet::cmd_report(run_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
