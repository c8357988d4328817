#include "ddnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ddnet/detectors.hpp"
#include "ddnet/io.hpp"

namespace fs = std::filesystem;

namespace ddnet {

namespace {

// Fixed stream labels so every stage draws from an independent, reproducible
// substream of the experiment seed.
constexpr std::uint64_t kStreamProfiles = 0x01;
constexpr std::uint64_t kStreamClientData = 0x02;
constexpr std::uint64_t kStreamPool = 0x03;
constexpr std::uint64_t kStreamInit = 0x04;
constexpr std::uint64_t kStreamTrain = 0x05;
constexpr std::uint64_t kStreamBalance = 0x06;
constexpr std::uint64_t kStreamFed = 0x07;
constexpr std::uint64_t kStreamEval = 0x08;

void reject_unknown_keys(const nlohmann::json& given, const nlohmann::json& schema,
                         const std::string& path) {
    if (!given.is_object()) return;
    for (auto it = given.begin(); it != given.end(); ++it) {
        std::string key_path = path.empty() ? it.key() : path + "." + it.key();
        check(schema.contains(it.key()), "config: unknown key '" + key_path + "'");
        if (it.value().is_object()) reject_unknown_keys(it.value(), schema.at(it.key()), key_path);
    }
}

template <typename T>
T field(const nlohmann::json& j, const std::string& key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::string client_path(const std::string& dir, int m) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "client_%03d.bin", m);
    return dir + "/" + buf;
}

void append_log(std::ofstream& log, const std::string& phase, const TrainResult& result) {
    for (const TrainLogEntry& e : result.log) {
        nlohmann::json rec{{"phase", phase},
                           {"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"val_loss", e.val_loss},
                           {"lr", e.lr}};
        log << rec.dump() << "\n";
    }
    log.flush();
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

nlohmann::json ledger_to_json(const OverheadLedger& ledger) {
    nlohmann::json phases = nlohmann::json::object();
    for (const auto& [name, ph] : ledger.phases)
        phases[name] = {{"bits_broadcast", ph.bits_broadcast},
                        {"bits_upload", ph.bits_upload},
                        {"bits_index", ph.bits_index}};
    return {{"phases", phases},
            {"totals",
             {{"bits_broadcast", ledger.total_broadcast()},
              {"bits_upload", ledger.total_upload()},
              {"bits_index", ledger.total_index()},
              {"bits_total", ledger.total()}}}};
}

struct EvalCondition {
    double value = 0.0;
    int n_r = 0;
    double rho = 0.0;
    double snr_db = 0.0;
};

}  // namespace

void ExperimentConfig::validate() const {
    system.validate();
    idetnet.validate();
    oampnet.validate();
    check(mode == "cl" || mode == "fedave" || mode == "fedgs",
          "config: mode must be cl, fedave or fedgs");
    check(xi >= 0.0, "config: xi must be nonnegative");
    check(data.clients >= 1 && data.samples_per_client >= 1, "config: data sizes must be positive");
    check(train.epochs_id >= 1 && train.epochs_oa >= 1 && train.epochs_ro >= 1,
          "config: epoch budgets must be positive");
    check(train.batch_size >= 1, "config: batch_size must be positive");
    check(fed.m_id >= 1 && fed.m_id <= data.clients, "config: fed.m_id out of range");
    check(fed.m_ro >= 1 && fed.m_ro <= data.clients, "config: fed.m_ro out of range");
    check(fed.local_steps >= 1, "config: fed.local_steps must be >= 1");
    check(fed.delta > 0.0 && fed.delta <= 1.0, "config: fed.delta must be in (0, 1]");
    check(eval.samples_per_point >= 1, "config: eval.samples_per_point must be positive");
    check(idetnet.n_t == system.n_t && oampnet.n_t == system.n_t && routenet.n_t == system.n_t,
          "config: model n_t must match system n_t");
    check(!output_dir.empty(), "config: output_dir must be set");
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    return {
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"mode", c.mode},
        {"xi", c.xi},
        {"system",
         {{"n_t", c.system.n_t},
          {"n_r_min", c.system.n_r_min},
          {"n_r_max", c.system.n_r_max},
          {"snr_db_min", c.system.snr_db_min},
          {"snr_db_max", c.system.snr_db_max},
          {"rho_min", c.system.rho_min},
          {"rho_max", c.system.rho_max}}},
        {"idetnet",
         {{"k_id", c.idetnet.k_id},
          {"h1", c.idetnet.h1},
          {"h2", c.idetnet.h2},
          {"detnet_compat", c.idetnet.detnet_compat}}},
        {"oampnet", {{"k_oa", c.oampnet.k_oa}}},
        {"routenet", {{"hidden", c.routenet.hidden}}},
        {"data",
         {{"clients", c.data.clients}, {"samples_per_client", c.data.samples_per_client}}},
        {"train",
         {{"epochs_id", c.train.epochs_id},
          {"epochs_oa", c.train.epochs_oa},
          {"epochs_ro", c.train.epochs_ro},
          {"batch_size", c.train.batch_size},
          {"lr", c.train.lr},
          {"patience", c.train.patience},
          {"validation_fraction", c.train.validation_fraction}}},
        {"fed",
         {{"m_id", c.fed.m_id},
          {"m_ro", c.fed.m_ro},
          {"local_steps", c.fed.local_steps},
          {"t_id", c.fed.t_id},
          {"t_ro", c.fed.t_ro},
          {"delta", c.fed.delta},
          {"bits_per_float", c.fed.bits_per_float}}},
        {"eval",
         {{"snr_points", c.eval.snr_points},
          {"n_r_points", c.eval.n_r_points},
          {"rho_points", c.eval.rho_points},
          {"samples_per_point", c.eval.samples_per_point},
          {"n_r_fixed", c.eval.n_r_fixed},
          {"rho_fixed", c.eval.rho_fixed},
          {"snr_fixed", c.eval.snr_fixed}}},
    };
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;  // defaults
    reject_unknown_keys(j, config_to_json(c), "");

    c.seed = field<std::uint64_t>(j, "seed", c.seed);
    c.output_dir = field<std::string>(j, "output_dir", c.output_dir);
    c.mode = field<std::string>(j, "mode", c.mode);
    c.xi = field<double>(j, "xi", c.xi);
    if (j.contains("system")) {
        const auto& s = j.at("system");
        c.system.n_t = field<int>(s, "n_t", c.system.n_t);
        c.system.n_r_min = field<int>(s, "n_r_min", c.system.n_r_min);
        c.system.n_r_max = field<int>(s, "n_r_max", c.system.n_r_max);
        c.system.snr_db_min = field<double>(s, "snr_db_min", c.system.snr_db_min);
        c.system.snr_db_max = field<double>(s, "snr_db_max", c.system.snr_db_max);
        c.system.rho_min = field<double>(s, "rho_min", c.system.rho_min);
        c.system.rho_max = field<double>(s, "rho_max", c.system.rho_max);
    }
    if (j.contains("idetnet")) {
        const auto& s = j.at("idetnet");
        c.idetnet.k_id = field<int>(s, "k_id", c.idetnet.k_id);
        c.idetnet.h1 = field<int>(s, "h1", c.idetnet.h1);
        c.idetnet.h2 = field<int>(s, "h2", c.idetnet.h2);
        c.idetnet.detnet_compat = field<bool>(s, "detnet_compat", c.idetnet.detnet_compat);
    }
    if (j.contains("oampnet")) c.oampnet.k_oa = field<int>(j.at("oampnet"), "k_oa", c.oampnet.k_oa);
    if (j.contains("routenet"))
        c.routenet.hidden = field<int>(j.at("routenet"), "hidden", c.routenet.hidden);
    if (j.contains("data")) {
        const auto& s = j.at("data");
        c.data.clients = field<int>(s, "clients", c.data.clients);
        c.data.samples_per_client = field<int>(s, "samples_per_client", c.data.samples_per_client);
    }
    if (j.contains("train")) {
        const auto& s = j.at("train");
        c.train.epochs_id = field<int>(s, "epochs_id", c.train.epochs_id);
        c.train.epochs_oa = field<int>(s, "epochs_oa", c.train.epochs_oa);
        c.train.epochs_ro = field<int>(s, "epochs_ro", c.train.epochs_ro);
        c.train.batch_size = field<int>(s, "batch_size", c.train.batch_size);
        c.train.lr = field<double>(s, "lr", c.train.lr);
        c.train.patience = field<int>(s, "patience", c.train.patience);
        c.train.validation_fraction =
            field<double>(s, "validation_fraction", c.train.validation_fraction);
    }
    if (j.contains("fed")) {
        const auto& s = j.at("fed");
        c.fed.m_id = field<int>(s, "m_id", c.fed.m_id);
        c.fed.m_ro = field<int>(s, "m_ro", c.fed.m_ro);
        c.fed.local_steps = field<int>(s, "local_steps", c.fed.local_steps);
        c.fed.t_id = field<int>(s, "t_id", c.fed.t_id);
        c.fed.t_ro = field<int>(s, "t_ro", c.fed.t_ro);
        c.fed.delta = field<double>(s, "delta", c.fed.delta);
        c.fed.bits_per_float = field<int>(s, "bits_per_float", c.fed.bits_per_float);
    }
    if (j.contains("eval")) {
        const auto& s = j.at("eval");
        c.eval.snr_points = field<std::vector<double>>(s, "snr_points", c.eval.snr_points);
        c.eval.n_r_points = field<std::vector<int>>(s, "n_r_points", c.eval.n_r_points);
        c.eval.rho_points = field<std::vector<double>>(s, "rho_points", c.eval.rho_points);
        c.eval.samples_per_point = field<int>(s, "samples_per_point", c.eval.samples_per_point);
        c.eval.n_r_fixed = field<int>(s, "n_r_fixed", c.eval.n_r_fixed);
        c.eval.rho_fixed = field<double>(s, "rho_fixed", c.eval.rho_fixed);
        c.eval.snr_fixed = field<double>(s, "snr_fixed", c.eval.snr_fixed);
    }
    c.idetnet.n_t = c.system.n_t;
    c.oampnet.n_t = c.system.n_t;
    c.routenet.n_t = c.system.n_t;
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    return config_from_json(nlohmann::json::parse(read_text_file(path)));
}

SampleLossFn idetnet_loss_fn(const std::vector<Sample>& samples, const IDetNetConfig& cfg) {
    return [&samples, cfg](Tape& tape, const std::vector<Var>& pvars, std::size_t i) {
        const Sample& s = samples[i];
        return idetnet_sample_loss(tape, idetnet_forward(tape, pvars, s.H, s.y, cfg), s.x);
    };
}

SampleLossFn oampnet_loss_fn(const std::vector<Sample>& samples, const OAMPNetConfig& cfg) {
    return [&samples, cfg](Tape& tape, const std::vector<Var>& pvars, std::size_t i) {
        const Sample& s = samples[i];
        return oampnet_sample_loss(tape, oampnet_forward(tape, pvars, s.H, s.y, s.sigma2, cfg),
                                   s.x);
    };
}

SampleLossFn routenet_loss_fn(const std::vector<RouteSample>& samples, double xi) {
    return [&samples, xi](Tape& tape, const std::vector<Var>& pvars, std::size_t i) {
        const RouteSample& s = samples[i];
        Var r_soft = tape.softmax(routenet_logits(tape, pvars, tape.constant(s.input)));
        return routenet_sample_loss(tape, r_soft, s.label, s.be_id, s.be_oa, xi);
    };
}

LocalObjective make_objective(const std::vector<Tensor>& like, const SampleLossFn& fn,
                              std::size_t n_samples, const std::vector<std::size_t>& trainable) {
    (void)like;
    std::vector<std::size_t> idx = all_indices(n_samples);
    LocalObjective obj;
    obj.size = n_samples;
    obj.loss = [fn, idx](const std::vector<Tensor>& params) {
        return mean_loss(params, fn, idx);
    };
    obj.grad = [fn, idx, trainable](const std::vector<Tensor>& params) {
        return loss_and_grad(params, fn, idx, trainable).second;
    };
    return obj;
}

void save_bundle(const std::string& dir, const ModelBundle& bundle,
                 const ExperimentConfig& cfg) {
    auto names = [](const std::vector<Tensor>& ts) {
        std::vector<std::string> ns;
        for (std::size_t i = 0; i < ts.size(); ++i) ns.push_back("t" + std::to_string(i));
        return ns;
    };
    nlohmann::json id_cfg{{"k_id", cfg.idetnet.k_id},
                          {"h1", cfg.idetnet.h1},
                          {"h2", cfg.idetnet.h2},
                          {"n_t", cfg.idetnet.n_t},
                          {"detnet_compat", cfg.idetnet.detnet_compat}};
    nlohmann::json oa_cfg{{"k_oa", cfg.oampnet.k_oa}, {"n_t", cfg.oampnet.n_t}};
    nlohmann::json ro_cfg{{"hidden", cfg.routenet.hidden}, {"n_t", cfg.routenet.n_t}};
    save_checkpoint(dir + "/idetnet", bundle.idet.tensors, names(bundle.idet.tensors), id_cfg);
    save_checkpoint(dir + "/oampnet", bundle.oamp.tensors, names(bundle.oamp.tensors), oa_cfg);
    save_checkpoint(dir + "/routenet", bundle.route.tensors, names(bundle.route.tensors), ro_cfg);
    write_text_file(dir + "/normstats.json", norm_stats_to_json(bundle.stats).dump(2) + "\n");
}

ModelBundle load_bundle(const std::string& dir, const ExperimentConfig& cfg) {
    ModelBundle b;
    nlohmann::json id_cfg, oa_cfg, ro_cfg;
    b.idet.cfg = cfg.idetnet;
    b.idet.tensors = load_checkpoint(dir + "/idetnet", &id_cfg);
    b.oamp.cfg = cfg.oampnet;
    b.oamp.tensors = load_checkpoint(dir + "/oampnet", &oa_cfg);
    b.route.cfg = cfg.routenet;
    b.route.tensors = load_checkpoint(dir + "/routenet", &ro_cfg);
    check(id_cfg.at("k_id") == cfg.idetnet.k_id && id_cfg.at("h1") == cfg.idetnet.h1 &&
              id_cfg.at("h2") == cfg.idetnet.h2 && id_cfg.at("n_t") == cfg.idetnet.n_t &&
              id_cfg.at("detnet_compat") == cfg.idetnet.detnet_compat,
          "load_bundle: idetnet checkpoint/config mismatch");
    check(oa_cfg.at("k_oa") == cfg.oampnet.k_oa && oa_cfg.at("n_t") == cfg.oampnet.n_t,
          "load_bundle: oampnet checkpoint/config mismatch");
    check(ro_cfg.at("hidden") == cfg.routenet.hidden && ro_cfg.at("n_t") == cfg.routenet.n_t,
          "load_bundle: routenet checkpoint/config mismatch");
    b.stats = norm_stats_from_json(nlohmann::json::parse(read_text_file(dir + "/normstats.json")));
    return b;
}

void cmd_gen_data(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.output_dir);
    Rng root(cfg.seed);

    Rng prof_rng = root.split(kStreamProfiles, 0);
    std::vector<ClientProfile> profiles =
        make_client_profiles(cfg.system, cfg.data.clients, prof_rng);

    std::vector<Dataset> client_sets;
    nlohmann::json manifest_clients = nlohmann::json::array();
    for (int m = 0; m < cfg.data.clients; ++m) {
        Rng crng = root.split(kStreamClientData, std::uint64_t(m));
        Dataset ds = generate_client_dataset(cfg.system.n_t, profiles[std::size_t(m)],
                                             cfg.data.samples_per_client, crng);
        save_dataset(ds, cfg.system.n_t, client_path(cfg.output_dir, m));
        manifest_clients.push_back({{"client_id", profiles[std::size_t(m)].client_id},
                                    {"rho_lo", profiles[std::size_t(m)].rho_lo},
                                    {"rho_hi", profiles[std::size_t(m)].rho_hi},
                                    {"snr_lo", profiles[std::size_t(m)].snr_lo},
                                    {"snr_hi", profiles[std::size_t(m)].snr_hi},
                                    {"n_r_min", profiles[std::size_t(m)].n_r_min},
                                    {"n_r_max", profiles[std::size_t(m)].n_r_max},
                                    {"samples", ds.samples.size()}});
        client_sets.push_back(std::move(ds));
    }
    Rng pool_rng = root.split(kStreamPool, 0);
    Dataset pooled = pool(client_sets, pool_rng);
    save_dataset(pooled, cfg.system.n_t, cfg.output_dir + "/pooled.bin");

    nlohmann::json manifest{{"config", config_to_json(cfg)},
                            {"clients", manifest_clients},
                            {"pooled_samples", pooled.samples.size()}};
    write_text_file(cfg.output_dir + "/manifest.json", manifest.dump(2) + "\n");
}

void cmd_train_cl(const ExperimentConfig& cfg) {
    cfg.validate();
    Dataset pooled = load_dataset(cfg.output_dir + "/pooled.bin");
    check(!pooled.samples.empty(), "train-cl: pooled dataset is empty");
    Rng root(cfg.seed);
    std::ofstream log(cfg.output_dir + "/train_log.jsonl", std::ios::trunc);
    check(bool(log), "train-cl: cannot open training log");

    TrainOptions opt;
    opt.batch_size = cfg.train.batch_size;
    opt.lr = cfg.train.lr;
    opt.patience = cfg.train.patience;
    opt.validation_fraction = cfg.train.validation_fraction;

    Rng init_rng = root.split(kStreamInit, 0);
    ModelBundle bundle;
    bundle.idet = init_idetnet(cfg.idetnet, init_rng);
    bundle.oamp = init_oampnet(cfg.oampnet);
    bundle.route = init_routenet(cfg.routenet, init_rng);

    // IDetNet, then OAMPNet, on the pooled detection samples.
    opt.epochs = cfg.train.epochs_id;
    opt.seed = root.split(kStreamTrain, 1).next_u64();
    TrainResult id_res =
        train_minibatch(bundle.idet.tensors, bundle.idet.trainable_indices(),
                        pooled.samples.size(), idetnet_loss_fn(pooled.samples, cfg.idetnet), opt);
    append_log(log, "idetnet", id_res);

    opt.epochs = cfg.train.epochs_oa;
    opt.seed = root.split(kStreamTrain, 2).next_u64();
    TrainResult oa_res = train_minibatch(
        bundle.oamp.tensors, all_indices(bundle.oamp.tensors.size()), pooled.samples.size(),
        oampnet_loss_fn(pooled.samples, cfg.oampnet), opt);
    append_log(log, "oampnet", oa_res);

    // Routing dataset from the trained branches, balanced, then RouteNet.
    bundle.stats = compute_norm_stats(pooled.samples, cfg.system.n_t);
    std::vector<RouteSample> route = build_route_dataset(pooled, bundle.idet, bundle.oamp,
                                                         bundle.stats);
    Rng bal_rng = root.split(kStreamBalance, 0);
    route = balance_route_dataset(std::move(route), bal_rng);
    save_route_dataset(route, cfg.output_dir + "/route_dataset.bin");

    opt.epochs = cfg.train.epochs_ro;
    opt.seed = root.split(kStreamTrain, 3).next_u64();
    TrainResult ro_res =
        train_minibatch(bundle.route.tensors, all_indices(bundle.route.tensors.size()),
                        route.size(), routenet_loss_fn(route, cfg.xi), opt);
    append_log(log, "routenet", ro_res);

    save_bundle(cfg.output_dir, bundle, cfg);
}

namespace {

/// Shared plumbing of the two federated commands; `use_fedgs` picks the
/// aggregation rule.
void run_federated(const ExperimentConfig& cfg, bool use_fedgs) {
    cfg.validate();
    std::vector<Dataset> clients;
    for (int m = 0; m < cfg.data.clients; ++m)
        clients.push_back(load_dataset(client_path(cfg.output_dir, m)));

    Rng root(cfg.seed);
    std::ofstream log(cfg.output_dir + "/train_log.jsonl", std::ios::trunc);
    check(bool(log), "federated: cannot open training log");
    OverheadLedger ledger;

    Rng init_rng = root.split(kStreamInit, 0);
    ModelBundle bundle;
    bundle.idet = init_idetnet(cfg.idetnet, init_rng);
    bundle.oamp = init_oampnet(cfg.oampnet);
    bundle.route = init_routenet(cfg.routenet, init_rng);

    // A small probe set for per-epoch loss logging.
    std::vector<Sample> probe;
    for (const Dataset& ds : clients)
        for (std::size_t i = 0; i < ds.samples.size() && probe.size() < 48; i += 32)
            probe.push_back(ds.samples[i]);

    auto fed_run = [&](std::vector<Tensor>& params, const std::vector<LocalObjective>& objs,
                       int m_select, int epochs, const std::string& phase,
                       const SampleLossFn& probe_fn, std::size_t probe_n) {
        FedConfig fc;
        fc.total_clients = cfg.data.clients;
        fc.m_select = m_select;
        fc.local_steps = cfg.fed.local_steps;
        fc.global_epochs = epochs;
        fc.delta = cfg.fed.delta;
        fc.bits_per_float = cfg.fed.bits_per_float;
        fc.lr = cfg.train.lr;
        Rng fed_rng = root.split(kStreamFed, std::hash<std::string>{}(phase));
        EpochCallback on_epoch = [&](int epoch, const std::vector<Tensor>& p,
                                     const std::vector<int>& selected) {
            double loss = probe_n ? mean_loss(p, probe_fn, all_indices(probe_n)) : 0.0;
            nlohmann::json rec{{"phase", phase},
                               {"epoch", epoch},
                               {"selected", selected},
                               {"probe_loss", loss},
                               {"bits_total", ledger.total()}};
            log << rec.dump() << "\n";
            log.flush();
        };
        params = use_fedgs
                     ? fedgs_train(objs, params, fc, fed_rng, ledger, phase, on_epoch)
                     : fedave_train(objs, params, fc, fed_rng, ledger, phase, on_epoch);
    };

    // IDetNet: federated across clients.
    {
        std::vector<SampleLossFn> fns;
        std::vector<LocalObjective> objs;
        fns.reserve(clients.size());
        for (const Dataset& ds : clients) fns.push_back(idetnet_loss_fn(ds.samples, cfg.idetnet));
        for (std::size_t m = 0; m < clients.size(); ++m)
            objs.push_back(make_objective(bundle.idet.tensors, fns[m],
                                          clients[m].samples.size(),
                                          bundle.idet.trainable_indices()));
        fed_run(bundle.idet.tensors, objs, cfg.fed.m_id, cfg.fed.t_id, "idetnet",
                idetnet_loss_fn(probe, cfg.idetnet), probe.size());
    }

    // OAMPNet: each client trains its own copy locally, then one simple average.
    {
        TrainOptions opt;
        opt.epochs = cfg.train.epochs_oa;
        opt.batch_size = cfg.train.batch_size;
        opt.lr = cfg.train.lr;
        opt.patience = cfg.train.patience;
        opt.validation_fraction = cfg.train.validation_fraction;
        std::vector<std::vector<Tensor>> locals;
        std::vector<std::size_t> ones;
        for (std::size_t m = 0; m < clients.size(); ++m) {
            std::vector<Tensor> p = bundle.oamp.tensors;
            opt.seed = root.split(kStreamTrain, 100 + m).next_u64();
            TrainResult res = train_minibatch(p, all_indices(p.size()),
                                              clients[m].samples.size(),
                                              oampnet_loss_fn(clients[m].samples, cfg.oampnet),
                                              opt);
            if (m == 0) append_log(log, "oampnet_client0", res);
            locals.push_back(std::move(p));
            ones.push_back(1);
        }
        bundle.oamp.tensors = aggregate_weighted(locals, ones);
    }

    // RouteNet: per-client route datasets from the shared branches.
    {
        std::vector<Sample> everything;
        for (const Dataset& ds : clients)
            everything.insert(everything.end(), ds.samples.begin(), ds.samples.end());
        bundle.stats = compute_norm_stats(everything, cfg.system.n_t);

        std::vector<std::vector<RouteSample>> route_sets;
        for (std::size_t m = 0; m < clients.size(); ++m) {
            std::vector<RouteSample> rs =
                build_route_dataset(clients[m], bundle.idet, bundle.oamp, bundle.stats);
            Rng bal_rng = root.split(kStreamBalance, m);
            route_sets.push_back(balance_route_dataset(std::move(rs), bal_rng));
        }
        std::vector<RouteSample> probe_route;
        for (const auto& rs : route_sets)
            for (std::size_t i = 0; i < rs.size() && probe_route.size() < 64; i += 16)
                probe_route.push_back(rs[i]);

        std::vector<SampleLossFn> fns;
        std::vector<LocalObjective> objs;
        for (std::size_t m = 0; m < route_sets.size(); ++m)
            fns.push_back(routenet_loss_fn(route_sets[m], cfg.xi));
        for (std::size_t m = 0; m < route_sets.size(); ++m)
            objs.push_back(make_objective(bundle.route.tensors, fns[m], route_sets[m].size(),
                                          all_indices(bundle.route.tensors.size())));
        fed_run(bundle.route.tensors, objs, cfg.fed.m_ro, cfg.fed.t_ro, "routenet",
                routenet_loss_fn(probe_route, cfg.xi), probe_route.size());
    }

    save_bundle(cfg.output_dir, bundle, cfg);

    std::uint64_t q_id = flatten(bundle.idet.tensors).size();
    std::uint64_t q_ro = flatten(bundle.route.tensors).size();
    nlohmann::json lj = ledger_to_json(ledger);
    lj["closed_form"] = {
        {"t_fedave", t_fedave(cfg.fed.bits_per_float, q_id, cfg.fed.t_id, cfg.fed.m_id, q_ro,
                              cfg.fed.t_ro, cfg.fed.m_ro)},
        {"t_fedgs", t_fedgs(cfg.fed.bits_per_float, q_id, cfg.fed.t_id, cfg.fed.m_id, q_ro,
                            cfg.fed.t_ro, cfg.fed.m_ro, cfg.fed.delta)}};
    write_text_file(cfg.output_dir + "/ledger.json", lj.dump(2) + "\n");
}

}  // namespace

void cmd_train_fedave(const ExperimentConfig& cfg) { run_federated(cfg, false); }
void cmd_train_fedgs(const ExperimentConfig& cfg) { run_federated(cfg, true); }

void cmd_eval(const ExperimentConfig& cfg, const std::string& axis) {
    cfg.validate();
    check(axis == "snr_db" || axis == "n_r" || axis == "rho",
          "eval: axis must be snr_db, n_r or rho");
    ModelBundle bundle = load_bundle(cfg.output_dir, cfg);
    Rng root(cfg.seed);

    std::vector<EvalCondition> conditions;
    if (axis == "snr_db") {
        for (double snr : cfg.eval.snr_points)
            conditions.push_back({snr, cfg.eval.n_r_fixed, cfg.eval.rho_fixed, snr});
    } else if (axis == "n_r") {
        for (int n_r : cfg.eval.n_r_points)
            conditions.push_back({double(n_r), n_r, cfg.eval.rho_fixed, cfg.eval.snr_fixed});
    } else {
        for (double rho : cfg.eval.rho_points)
            conditions.push_back({rho, cfg.eval.n_r_fixed, rho, cfg.eval.snr_fixed});
    }

    std::vector<DetectorHandle> detectors;
    detectors.push_back({"lmmse",
                         [](const Sample& s) { return lmmse_detect(s.y, s.H, s.sigma2); },
                         [&](const Sample& s) { return flops_lmmse(cfg.system.n_t, s.n_r); }});
    if (cfg.system.n_t <= 8)
        detectors.push_back({"ml", [](const Sample& s) { return ml_detect(s.y, s.H); }, {}});
    detectors.push_back({"idetnet",
                         [&](const Sample& s) {
                             return quantize(idetnet_infer(bundle.idet, s.H, s.y));
                         },
                         [&](const Sample& s) { return flops_idetnet(cfg.idetnet, s.n_r); }});
    detectors.push_back({"oampnet",
                         [&](const Sample& s) {
                             return quantize(oampnet_infer(bundle.oamp, s.H, s.y, s.sigma2));
                         },
                         [&](const Sample& s) { return flops_oampnet(cfg.oampnet, s.n_r); }});

    nlohmann::json out;
    out["axis"] = axis;
    out["seed"] = cfg.seed;
    out["samples_per_point"] = cfg.eval.samples_per_point;
    nlohmann::json det_json = nlohmann::json::object();
    nlohmann::json ddnet_json = nlohmann::json::array();
    std::ostringstream csv;
    csv << "detector," << axis << ",bit_errors,bits_total,ber\n";

    for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
        const EvalCondition& cond = conditions[ci];
        Rng crng = root.split(kStreamEval, ci);
        std::vector<Sample> samples;
        samples.reserve(std::size_t(cfg.eval.samples_per_point));
        for (int i = 0; i < cfg.eval.samples_per_point; ++i)
            samples.push_back(
                generate_sample(cfg.system.n_t, cond.n_r, cond.rho, cond.snr_db, crng));

        for (const DetectorHandle& det : detectors) {
            BerPoint p = ber_on(det, samples, cond.value);
            det_json[det.name].push_back({{"condition", cond.value},
                                          {"bit_errors", p.bit_errors},
                                          {"bits_total", p.bits_total},
                                          {"ber", p.ber()}});
            csv << det.name << "," << cond.value << "," << p.bit_errors << "," << p.bits_total
                << "," << p.ber() << "\n";
        }

        long long errors = 0, bits = 0, id_count = 0;
        long long flops_sum = 0;
        for (const Sample& s : samples) {
            DDNetResult r = ddnet_detect(s, bundle.idet, bundle.oamp, bundle.route, bundle.stats);
            errors += bit_errors(r.x_hat, s.x);
            bits += static_cast<long long>(s.bits.size());
            if (r.branch == 0) ++id_count;
            flops_sum += flops_ddnet(cfg.idetnet, cfg.oampnet, cfg.routenet, s.n_r, r.branch);
        }
        double ber = bits ? double(errors) / double(bits) : 0.0;
        det_json["ddnet"].push_back({{"condition", cond.value},
                                     {"bit_errors", errors},
                                     {"bits_total", bits},
                                     {"ber", ber}});
        ddnet_json.push_back(
            {{"condition", cond.value},
             {"branch_id_count", id_count},
             {"branch_oa_count", static_cast<long long>(samples.size()) - id_count},
             {"branch_id_fraction", double(id_count) / double(samples.size())},
             {"avg_flops", double(flops_sum) / double(samples.size())}});
        csv << "ddnet," << cond.value << "," << errors << "," << bits << "," << ber << "\n";
    }
    out["detectors"] = det_json;
    out["ddnet_routing"] = ddnet_json;
    write_text_file(cfg.output_dir + "/eval_" + axis + ".json", out.dump(2) + "\n");
    write_text_file(cfg.output_dir + "/eval_" + axis + ".csv", csv.str());
}

void cmd_report(const std::string& run_dir) {
    check(fs::is_directory(run_dir), "report: run directory does not exist: " + run_dir);
    nlohmann::json summary;
    std::ostringstream text;
    text << "run summary: " << fs::path(run_dir).filename().string() << "\n";
    bool found = false;

    if (fs::exists(run_dir + "/manifest.json")) {
        summary["manifest"] = nlohmann::json::parse(read_text_file(run_dir + "/manifest.json"));
        text << "dataset: " << summary["manifest"].value("pooled_samples", 0) << " pooled samples, "
             << summary["manifest"]["clients"].size() << " clients\n";
        found = true;
    }
    if (fs::exists(run_dir + "/train_log.jsonl")) {
        std::istringstream lines(read_text_file(run_dir + "/train_log.jsonl"));
        std::string line;
        std::map<std::string, nlohmann::json> last;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            nlohmann::json rec = nlohmann::json::parse(line);
            last[rec.at("phase").get<std::string>()] = rec;
        }
        nlohmann::json phases = nlohmann::json::object();
        for (const auto& [phase, rec] : last) {
            phases[phase] = rec;
            text << "training " << phase << ": last epoch " << rec.value("epoch", -1);
            if (rec.contains("train_loss")) text << ", loss " << rec["train_loss"].dump();
            if (rec.contains("probe_loss")) text << ", probe loss " << rec["probe_loss"].dump();
            text << "\n";
        }
        summary["training_final"] = phases;
        found = true;
    }
    if (fs::exists(run_dir + "/ledger.json")) {
        summary["ledger"] = nlohmann::json::parse(read_text_file(run_dir + "/ledger.json"));
        text << "transmission ledger: " << summary["ledger"]["totals"]["bits_total"].dump()
             << " bits total\n";
        found = true;
    }
    for (const std::string axis : {"snr_db", "n_r", "rho"}) {
        std::string path = run_dir + "/eval_" + axis + ".json";
        if (!fs::exists(path)) continue;
        nlohmann::json ev = nlohmann::json::parse(read_text_file(path));
        summary["eval"][axis] = ev;
        text << "eval sweep over " << axis << ":\n";
        for (auto it = ev["detectors"].begin(); it != ev["detectors"].end(); ++it) {
            text << "  " << it.key() << ":";
            for (const auto& p : it.value())
                text << " " << p["condition"].dump() << "->" << p["ber"].dump();
            text << "\n";
        }
        found = true;
    }
    check(found, "report: no artifacts found in " + run_dir);
    write_text_file(run_dir + "/summary.json", summary.dump(2) + "\n");
    write_text_file(run_dir + "/summary.txt", text.str());
}

}  // namespace ddnet
