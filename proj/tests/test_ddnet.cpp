#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "ddnet/channel.hpp"
#include "ddnet/detectors.hpp"
#include "ddnet/routenet.hpp"
#include "ddnet/train.hpp"

using namespace ddnet;

namespace {

std::vector<Sample> sample_batch(int n, int n_t, int n_r, double rho, double snr, Rng& rng) {
    std::vector<Sample> v;
    for (int i = 0; i < n; ++i) v.push_back(generate_sample(n_t, n_r, rho, snr, rng));
    return v;
}

}  // namespace

TEST_CASE("normalize: endpoints, midpoint, degenerate, extrapolation") {
    NormStats stats;
    stats.lo = Tensor::vector({0.0, 2.0, 5.0});
    stats.hi = Tensor::vector({1.0, 4.0, 5.0});
    Tensor at_min = normalize(Tensor::vector({0.0, 2.0, 5.0}), stats);
    Tensor at_max = normalize(Tensor::vector({1.0, 4.0, 5.0}), stats);
    Tensor mid = normalize(Tensor::vector({0.5, 3.0, 5.0}), stats);
    for (int i = 0; i < 2; ++i) {
        CHECK(at_min(std::size_t(i)) == doctest::Approx(0.0));
        CHECK(at_max(std::size_t(i)) == doctest::Approx(1.0));
        CHECK(mid(std::size_t(i)) == doctest::Approx(0.5));
    }
    CHECK(at_min(2) == doctest::Approx(0.0));  // degenerate component
    Tensor beyond = normalize(Tensor::vector({2.0, 6.0, 7.0}), stats);
    CHECK(beyond(0) == doctest::Approx(2.0));  // no clipping
    CHECK(beyond(1) == doctest::Approx(2.0));
}

TEST_CASE("route input layout and length") {
    RouteNetConfig cfg;
    cfg.n_t = 2;
    CHECK(cfg.input_len() == 20);
    CHECK(cfg.feature_len() == 18);

    Rng rng(3);
    std::vector<Sample> samples = sample_batch(32, 2, 3, 0.4, 5.0, rng);
    NormStats stats = compute_norm_stats(samples, 2);
    Tensor input = build_route_input(samples[0], stats, 2);
    REQUIRE(input.size() == 20);
    // First n_t entries are the expanded sigma2, last n_t the expanded N_r.
    CHECK(input(0) == doctest::Approx(input(1)));
    CHECK(input(18) == doctest::Approx(input(19)));
    // The H^T H block has (2n_t)^2 entries independent of n_r.
    Tensor raw = raw_route_features(samples[0], 2);
    REQUIRE(raw.size() == 18);
    CHECK(raw(0) == doctest::Approx(samples[0].sigma2));
    CHECK(raw(17) == doctest::Approx(double(samples[0].n_r)));
    Tensor hth = matmul(transpose(samples[0].H), samples[0].H);
    CHECK(raw(1) == doctest::Approx(hth(0, 0)));
}

TEST_CASE("routenet forward: softmax simplex and tie rule") {
    CHECK(route_pred_from_logits(Tensor::vector({2.0, -1.0})) == 0);
    CHECK(route_pred_from_logits(Tensor::vector({-1.0, 2.0})) == 1);
    CHECK(route_pred_from_logits(Tensor::vector({0.4, 0.4})) == 0);

    RouteNetConfig cfg;
    cfg.n_t = 2;
    cfg.hidden = 8;
    Rng rng(5);
    RouteNetParams p = init_routenet(cfg, rng);
    Tensor input = Tensor::zeros({std::size_t(cfg.input_len())});
    for (double& v : input.data) v = rng.uniform(0, 1);
    auto [soft, pred] = routenet_forward(p, input);
    CHECK(soft(0) + soft(1) == doctest::Approx(1.0));
    CHECK(soft(0) > 0.0);
    CHECK(soft(1) > 0.0);
    CHECK((pred == 0 || pred == 1));
}

TEST_CASE("route labels: base and epsilon variants") {
    CHECK(route_label(0, 0) == 0);
    CHECK(route_label(3, 1) == 1);
    CHECK(route_label(1, 3) == 0);
    for (int a = 0; a <= 4; ++a)
        for (int b = 0; b <= 4; ++b)
            CHECK(route_label_eps(a, b, 0.0) == route_label(a, b));
    CHECK(route_label_eps(2, 1, -2.0) == 1);
    CHECK(route_label_eps(2, 1, 2.0) == 0);
}

TEST_CASE("balance: equal counts, subset, labels intact") {
    Rng rng(7);
    std::vector<RouteSample> rs;
    for (int i = 0; i < 100; ++i) {
        RouteSample s;
        s.input = Tensor::vector({double(i)});
        s.label = 0;
        rs.push_back(s);
    }
    for (int i = 0; i < 40; ++i) {
        RouteSample s;
        s.input = Tensor::vector({double(1000 + i)});
        s.label = 1;
        rs.push_back(s);
    }
    std::vector<RouteSample> balanced = balance_route_dataset(rs, rng);
    long c0 = std::count_if(balanced.begin(), balanced.end(),
                            [](const RouteSample& s) { return s.label == 0; });
    long c1 = long(balanced.size()) - c0;
    CHECK(c0 == 40);
    CHECK(c1 == 40);
    for (const RouteSample& s : balanced)
        CHECK(((s.label == 0 && s.input(0) < 100) || (s.label == 1 && s.input(0) >= 1000)));

    std::vector<RouteSample> single(rs.begin(), rs.begin() + 100);  // one class only
    CHECK_THROWS(balance_route_dataset(single, rng));
}

TEST_CASE("routenet loss: hand case and xi = 0 reduction") {
    Tape tape;
    Var soft = tape.constant(Tensor::vector({0.5, 0.5}));
    double loss = tape.val(routenet_sample_loss(tape, soft, 0, 0, 4, 0.5)).item();
    CHECK(loss == doctest::Approx(-std::log(0.5) + 1.0));
    double ce_only = tape.val(routenet_sample_loss(tape, soft, 0, 0, 4, 0.0)).item();
    CHECK(ce_only == doctest::Approx(-std::log(0.5)));

    // Surrogate penalty is zero at a vertex selecting the min-error branch.
    Var vertex = tape.constant(Tensor::vector({1.0 - 1e-12, 1e-12}));
    double vloss = tape.val(routenet_sample_loss(tape, vertex, 0, 0, 4, 0.5)).item();
    CHECK(std::abs(vloss) < 1e-6);
}

TEST_CASE("route dataset labels agree with per-sample branch errors") {
    Rng rng(11);
    IDetNetConfig id_cfg;
    id_cfg.k_id = 2;
    id_cfg.n_t = 2;
    id_cfg.h1 = 8;
    id_cfg.h2 = 4;
    OAMPNetConfig oa_cfg;
    oa_cfg.k_oa = 2;
    oa_cfg.n_t = 2;
    IDetNetParams idp = init_idetnet(id_cfg, rng);
    OAMPNetParams oap = init_oampnet(oa_cfg);

    Dataset ds;
    ds.samples = sample_batch(40, 2, 3, 0.2, 5.0, rng);
    NormStats stats = compute_norm_stats(ds.samples, 2);
    std::vector<RouteSample> rs = build_route_dataset(ds, idp, oap, stats);
    REQUIRE(rs.size() == 40);
    for (std::size_t i = 0; i < rs.size(); ++i) {
        int be_id = bit_errors(idetnet_infer(idp, ds.samples[i].H, ds.samples[i].y),
                               ds.samples[i].x);
        int be_oa = bit_errors(
            oampnet_infer(oap, ds.samples[i].H, ds.samples[i].y, ds.samples[i].sigma2),
            ds.samples[i].x);
        CHECK(rs[i].be_id == be_id);
        CHECK(rs[i].be_oa == be_oa);
        CHECK(rs[i].label == route_label(be_id, be_oa));
    }
}

TEST_CASE("ddnet detection equals the selected branch exactly") {
    Rng rng(13);
    IDetNetConfig id_cfg;
    id_cfg.k_id = 2;
    id_cfg.n_t = 2;
    id_cfg.h1 = 8;
    id_cfg.h2 = 4;
    OAMPNetConfig oa_cfg;
    oa_cfg.k_oa = 2;
    oa_cfg.n_t = 2;
    RouteNetConfig ro_cfg;
    ro_cfg.n_t = 2;
    ro_cfg.hidden = 8;
    IDetNetParams idp = init_idetnet(id_cfg, rng);
    OAMPNetParams oap = init_oampnet(oa_cfg);
    RouteNetParams rop = init_routenet(ro_cfg, rng);

    std::vector<Sample> samples = sample_batch(30, 2, 3, 0.3, 8.0, rng);
    NormStats stats = compute_norm_stats(samples, 2);
    long long dd_errors = 0, branch_errors = 0;
    for (const Sample& s : samples) {
        DDNetResult r = ddnet_detect(s, idp, oap, rop, stats);
        Tensor branch_out = r.branch == 0 ? quantize(idetnet_infer(idp, s.H, s.y))
                                          : quantize(oampnet_infer(oap, s.H, s.y, s.sigma2));
        CHECK(norm2sq(sub(r.x_hat, branch_out)) == 0.0);
        dd_errors += bit_errors(r.x_hat, s.x);
        branch_errors += bit_errors(branch_out, s.x);
    }
    CHECK(dd_errors == branch_errors);
}

TEST_CASE("flop accounting: branch comparison and routing identity") {
    IDetNetConfig id_cfg;  // defaults: K=40 h1=64 h2=32 n_t=4
    OAMPNetConfig oa_cfg;  // K=8
    RouteNetConfig ro_cfg;
    long long f_id = flops_idetnet(id_cfg, 8);
    long long f_oa = flops_oampnet(oa_cfg, 8);
    long long f_ro = flops_routenet(ro_cfg, 8);
    CHECK(f_id > 0);
    CHECK(f_oa > 0);
    CHECK(f_ro > 0);
    CHECK(flops_ddnet(id_cfg, oa_cfg, ro_cfg, 8, 0) == f_ro + f_id);
    CHECK(flops_ddnet(id_cfg, oa_cfg, ro_cfg, 8, 1) == f_ro + f_oa);
    CHECK(flops_lmmse(4, 8) > 0);
}

TEST_CASE("routenet surrogate gradient matches finite differences") {
    RouteNetConfig cfg;
    cfg.n_t = 2;
    cfg.hidden = 6;
    Rng rng(17);
    RouteNetParams p = init_routenet(cfg, rng);
    RouteSample rs;
    rs.input = Tensor::zeros({std::size_t(cfg.input_len())});
    for (double& v : rs.input.data) v = rng.uniform(0, 1);
    rs.label = 1;
    rs.be_id = 3;
    rs.be_oa = 1;
    SampleLossFn fn = [&rs](Tape& tape, const std::vector<Var>& pv, std::size_t) {
        Var soft = tape.softmax(routenet_logits(tape, pv, tape.constant(rs.input)));
        return routenet_sample_loss(tape, soft, rs.label, rs.be_id, rs.be_oa, 0.5);
    };
    std::vector<std::size_t> trainable = {0, 1, 2, 3};
    auto [loss, grads] = loss_and_grad(p.tensors, fn, {0}, trainable);
    const double h = 1e-5;
    Rng pick(19);
    for (std::size_t t : trainable)
        for (int rep = 0; rep < 4; ++rep) {
            std::size_t i = std::size_t(pick.uniform_int(0, int(p.tensors[t].size()) - 1));
            std::vector<Tensor> pp = p.tensors, pm = p.tensors;
            pp[t].data[i] += h;
            pm[t].data[i] -= h;
            double fd = (mean_loss(pp, fn, {0}) - mean_loss(pm, fn, {0})) / (2 * h);
            double sc = std::max({std::abs(fd), std::abs(grads[t].data[i]), 1e-6});
            CHECK(std::abs(grads[t].data[i] - fd) / sc < 1e-4);
        }
}
