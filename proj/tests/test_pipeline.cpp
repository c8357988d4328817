#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ddnet/detectors.hpp"
#include "ddnet/io.hpp"
#include "ddnet/pipeline.hpp"

using namespace ddnet;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / "ddnet_pipeline_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

// Desk-scale configuration so every command finishes in seconds.
ExperimentConfig tiny_config(const std::string& dir) {
    ExperimentConfig cfg;
    cfg.seed = 7;
    cfg.output_dir = dir;
    cfg.system.n_t = 2;
    cfg.system.n_r_min = 2;
    cfg.system.n_r_max = 4;
    cfg.idetnet.n_t = 2;
    cfg.idetnet.k_id = 2;
    cfg.idetnet.h1 = 8;
    cfg.idetnet.h2 = 6;
    cfg.oampnet.n_t = 2;
    cfg.oampnet.k_oa = 2;
    cfg.routenet.n_t = 2;
    cfg.routenet.hidden = 8;
    cfg.data.clients = 4;
    cfg.data.samples_per_client = 40;
    cfg.train.epochs_id = 2;
    cfg.train.epochs_oa = 1;
    cfg.train.epochs_ro = 2;
    cfg.train.batch_size = 16;
    cfg.fed.m_id = 2;
    cfg.fed.m_ro = 2;
    cfg.fed.t_id = 2;
    cfg.fed.t_ro = 2;
    cfg.eval.snr_points = {0.0, 10.0};
    cfg.eval.samples_per_point = 40;
    cfg.eval.n_r_fixed = 3;
    return cfg;
}

std::string slurp(const std::string& path) { return read_text_file(path); }

// One shared centralized run most cases inspect; built on first use.
const ExperimentConfig& trained_cl_run() {
    static ExperimentConfig cfg = [] {
        ExperimentConfig c = tiny_config(fresh_dir("cl_run"));
        cmd_gen_data(c);
        cmd_train_cl(c);
        return c;
    }();
    return cfg;
}

std::map<std::string, std::vector<nlohmann::json>> read_train_log(const std::string& dir) {
    std::istringstream lines(slurp(dir + "/train_log.jsonl"));
    std::map<std::string, std::vector<nlohmann::json>> by_phase;
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line);
        by_phase[rec.at("phase").get<std::string>()].push_back(rec);
    }
    return by_phase;
}

}  // namespace

TEST_CASE("config: json round trip preserves every field") {
    ExperimentConfig cfg = tiny_config("runs/x");
    cfg.mode = "fedgs";
    cfg.xi = 0.25;
    cfg.fed.delta = 0.6;
    cfg.eval.rho_points = {0.1, 0.7};
    nlohmann::json j = config_to_json(cfg);
    ExperimentConfig back = config_from_json(j);
    CHECK(config_to_json(back).dump() == j.dump());
    CHECK(back.fed.delta == doctest::Approx(0.6));
    CHECK(back.eval.rho_points.size() == 2);
    CHECK(back.idetnet.h1 == 8);
}

TEST_CASE("config: unknown keys and invalid values are rejected") {
    CHECK_THROWS(config_from_json(nlohmann::json{{"bogus", 1}}));
    CHECK_THROWS(config_from_json(nlohmann::json{{"train", {{"bogus", 1}}}}));
    ExperimentConfig cfg = tiny_config("runs/x");
    cfg.mode = "nope";
    CHECK_THROWS(cfg.validate());
    cfg = tiny_config("runs/x");
    cfg.fed.delta = 0.0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("config: the parser mirrors n_t into every model block") {
    nlohmann::json j{{"system", {{"n_t", 3}}}};
    ExperimentConfig cfg = config_from_json(j);
    CHECK(cfg.idetnet.n_t == 3);
    CHECK(cfg.oampnet.n_t == 3);
    CHECK(cfg.routenet.n_t == 3);
}

TEST_CASE("gen-data: files, pooled size, deterministic replay, sane manifest") {
    ExperimentConfig a = tiny_config(fresh_dir("gen_a"));
    ExperimentConfig b = tiny_config(fresh_dir("gen_b"));
    cmd_gen_data(a);
    cmd_gen_data(b);

    for (int m = 0; m < 4; ++m) {
        char name[32];
        std::snprintf(name, sizeof(name), "/client_%03d.bin", m);
        CHECK(fs::exists(a.output_dir + name));
    }
    Dataset pooled = load_dataset(a.output_dir + "/pooled.bin");
    CHECK(pooled.samples.size() == 160);
    CHECK(slurp(a.output_dir + "/pooled.bin") == slurp(b.output_dir + "/pooled.bin"));

    nlohmann::json manifest = nlohmann::json::parse(slurp(a.output_dir + "/manifest.json"));
    CHECK(manifest.at("pooled_samples").get<int>() == 160);
    REQUIRE(manifest.at("clients").size() == 4);
    for (const auto& c : manifest["clients"]) {
        double rlo = c.at("rho_lo"), rhi = c.at("rho_hi");
        double slo = c.at("snr_lo"), shi = c.at("snr_hi");
        CHECK(rlo >= 0.0);
        CHECK(rhi <= 0.9);
        CHECK(rhi - rlo == doctest::Approx(0.2));
        CHECK(slo >= -5.0);
        CHECK(shi <= 15.0);
        CHECK(shi - slo == doctest::Approx(5.0));
        CHECK(c.at("n_r_min").get<int>() >= 2);
        CHECK(c.at("n_r_max").get<int>() <= 4);
        CHECK(c.at("samples").get<int>() == 40);
    }
}

TEST_CASE("train-cl: losses logged per phase, route dataset balanced, bundle reloads") {
    const ExperimentConfig& cfg = trained_cl_run();

    auto log = read_train_log(cfg.output_dir);
    REQUIRE(log.count("idetnet"));
    REQUIRE(log.count("oampnet"));
    REQUIRE(log.count("routenet"));
    double first = log["idetnet"].front().at("train_loss");
    double last = log["idetnet"].back().at("train_loss");
    CHECK(last < first);
    for (const auto& [phase, recs] : log)
        for (const auto& r : recs) {
            CHECK(std::isfinite(r.at("train_loss").get<double>()));
            CHECK(r.at("train_loss").get<double>() >= 0.0);
        }

    std::vector<RouteSample> rs = load_route_dataset(cfg.output_dir + "/route_dataset.bin");
    REQUIRE(!rs.empty());
    std::size_t ones = 0;
    for (const RouteSample& r : rs) ones += std::size_t(r.label == 1);
    CHECK(ones * 2 == rs.size());

    ModelBundle bundle = load_bundle(cfg.output_dir, cfg);
    CHECK(bundle.idet.tensors.size() == 2 * 9);
    CHECK(bundle.oamp.tensors.size() == 2 * 4);
    CHECK(bundle.route.tensors.size() == 4);
    CHECK(bundle.stats.lo.size() == std::size_t(cfg.routenet.feature_len()));

    ExperimentConfig other = cfg;
    other.idetnet.h1 = 12;
    CHECK_THROWS(load_bundle(cfg.output_dir, other));
}

TEST_CASE("eval: csv row count, bit accounting, branch counts") {
    const ExperimentConfig& cfg = trained_cl_run();
    cmd_eval(cfg, "snr_db");

    std::istringstream csv(slurp(cfg.output_dir + "/eval_snr_db.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "detector,snr_db,bit_errors,bits_total,ber");
    int rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    // 5 detectors (lmmse, ml, idetnet, oampnet, ddnet) x 2 SNR points.
    CHECK(rows == 10);

    nlohmann::json ev = nlohmann::json::parse(slurp(cfg.output_dir + "/eval_snr_db.json"));
    for (const auto& name : {"lmmse", "ml", "idetnet", "oampnet", "ddnet"}) {
        REQUIRE(ev["detectors"].contains(name));
        for (const auto& p : ev["detectors"][name]) {
            CHECK(p.at("bits_total").get<long long>() == 40 * 4);
            double ber = p.at("ber");
            CHECK(ber >= 0.0);
            CHECK(ber <= 1.0);
        }
    }
    REQUIRE(ev["ddnet_routing"].size() == 2);
    for (const auto& r : ev["ddnet_routing"]) {
        long long id = r.at("branch_id_count"), oa = r.at("branch_oa_count");
        CHECK(id + oa == 40);
        CHECK(r.at("avg_flops").get<double>() > 0.0);
    }
    CHECK_THROWS(cmd_eval(cfg, "time"));
}

TEST_CASE("report: merges artifacts, errors on an empty directory, idempotent") {
    CHECK_THROWS(cmd_report(fresh_dir("empty_run")));

    const ExperimentConfig& cfg = trained_cl_run();
    cmd_eval(cfg, "snr_db");
    cmd_report(cfg.output_dir);
    std::string once = slurp(cfg.output_dir + "/summary.json");
    cmd_report(cfg.output_dir);
    CHECK(slurp(cfg.output_dir + "/summary.json") == once);

    nlohmann::json summary = nlohmann::json::parse(once);
    CHECK(summary.at("manifest").at("pooled_samples").get<int>() == 160);
    nlohmann::json ev = nlohmann::json::parse(slurp(cfg.output_dir + "/eval_snr_db.json"));
    CHECK(summary["eval"]["snr_db"]["detectors"]["lmmse"].dump() ==
          ev["detectors"]["lmmse"].dump());
    CHECK(!slurp(cfg.output_dir + "/summary.txt").empty());
}

TEST_CASE("fedave: simulated ledger equals the closed-form overhead") {
    ExperimentConfig cfg = tiny_config(fresh_dir("fedave_run"));
    cfg.mode = "fedave";
    cmd_gen_data(cfg);
    cmd_train_fedave(cfg);

    ModelBundle bundle = load_bundle(cfg.output_dir, cfg);
    const std::uint64_t q_id = flatten(bundle.idet.tensors).size();
    const std::uint64_t q_ro = flatten(bundle.route.tensors).size();
    const std::uint64_t expected = t_fedave(cfg.fed.bits_per_float, q_id, cfg.fed.t_id,
                                            cfg.fed.m_id, q_ro, cfg.fed.t_ro, cfg.fed.m_ro);

    nlohmann::json ledger = nlohmann::json::parse(slurp(cfg.output_dir + "/ledger.json"));
    CHECK(ledger["totals"]["bits_index"].get<std::uint64_t>() == 0);
    CHECK(ledger["totals"]["bits_total"].get<std::uint64_t>() == expected);
    CHECK(ledger["closed_form"]["t_fedave"].get<std::uint64_t>() == expected);

    auto log = read_train_log(cfg.output_dir);
    REQUIRE(log.count("idetnet"));
    REQUIRE(log.count("routenet"));
    CHECK(log["idetnet"].size() == std::size_t(cfg.fed.t_id));
}

TEST_CASE("fedgs: delta=1 ledger bounded by the dense upload plus index bits") {
    ExperimentConfig cfg = tiny_config(fresh_dir("fedgs_run"));
    cfg.mode = "fedgs";
    cfg.fed.delta = 1.0;
    cmd_gen_data(cfg);
    cmd_train_fedgs(cfg);

    ModelBundle bundle = load_bundle(cfg.output_dir, cfg);
    const std::uint64_t q_id = flatten(bundle.idet.tensors).size();
    const std::uint64_t q_ro = flatten(bundle.route.tensors).size();
    const std::uint64_t dense_oneway =
        std::uint64_t(cfg.fed.bits_per_float) *
        (q_id * std::uint64_t(cfg.fed.t_id) * std::uint64_t(cfg.fed.m_id) +
         q_ro * std::uint64_t(cfg.fed.t_ro) * std::uint64_t(cfg.fed.m_ro));

    nlohmann::json ledger = nlohmann::json::parse(slurp(cfg.output_dir + "/ledger.json"));
    CHECK(ledger["totals"]["bits_broadcast"].get<std::uint64_t>() == dense_oneway);
    // One index bit per component per uploader per epoch.
    CHECK(ledger["totals"]["bits_index"].get<std::uint64_t>() ==
          q_id * std::uint64_t(cfg.fed.t_id) * std::uint64_t(cfg.fed.m_id) +
              q_ro * std::uint64_t(cfg.fed.t_ro) * std::uint64_t(cfg.fed.m_ro));
    std::uint64_t upload = ledger["totals"]["bits_upload"].get<std::uint64_t>();
    CHECK(upload <= dense_oneway);
    CHECK(upload >= dense_oneway / 2);
}

TEST_CASE("fedave via make_objective: one full-participation epoch at l=1 "
          "matches a centralized optimizer step on identical clients") {
    const ExperimentConfig& run = trained_cl_run();
    Dataset pooled = load_dataset(run.output_dir + "/pooled.bin");
    std::vector<Sample> subset(pooled.samples.begin(), pooled.samples.begin() + 8);

    Rng rng(31);
    IDetNetParams params = init_idetnet(run.idetnet, rng);
    SampleLossFn fn = idetnet_loss_fn(subset, run.idetnet);
    LocalObjective obj =
        make_objective(params.tensors, fn, subset.size(), params.trainable_indices());
    std::vector<LocalObjective> clients(3, obj);

    FedConfig fc;
    fc.total_clients = 3;
    fc.m_select = 3;
    fc.local_steps = 1;
    fc.global_epochs = 1;
    Rng fed_rng(4);
    OverheadLedger ledger;
    std::vector<Tensor> fed = fedave_train(clients, params.tensors, fc, fed_rng, ledger, "p");

    auto [loss, grads] = loss_and_grad(params.tensors, fn, {0, 1, 2, 3, 4, 5, 6, 7},
                                       params.trainable_indices());
    CHECK(loss > 0.0);
    AdamState st;
    st.init_like(params.tensors);
    std::vector<Tensor> central = params.tensors;
    st.step(central, grads);

    double max_diff = 0.0;
    for (std::size_t i = 0; i < fed.size(); ++i)
        for (std::size_t j = 0; j < fed[i].size(); ++j)
            max_diff = std::max(max_diff, std::abs(fed[i].data[j] - central[i].data[j]));
    CHECK(max_diff <= 1e-10);
}
