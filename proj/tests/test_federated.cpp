#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ddnet/federated.hpp"
#include "ddnet/optim.hpp"

using namespace ddnet;

namespace {

// Quadratic objective 0.5 ||p - target||^2 with gradient p - target.
LocalObjective quadratic(const Tensor& target) {
    LocalObjective obj;
    obj.size = 4;
    obj.loss = [target](const std::vector<Tensor>& p) {
        return 0.5 * norm2sq(sub(p[0], target));
    };
    obj.grad = [target](const std::vector<Tensor>& p) {
        return std::vector<Tensor>{sub(p[0], target)};
    };
    return obj;
}

double max_abs_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j)
            m = std::max(m, std::abs(a[i].data[j] - b[i].data[j]));
    return m;
}

}  // namespace

TEST_CASE("flatten and unflatten round trip") {
    std::vector<Tensor> ts = {Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor::vector({5, 6})};
    Tensor flat = flatten(ts);
    REQUIRE(flat.size() == 6);
    CHECK(flat(4) == doctest::Approx(5));
    std::vector<Tensor> back = unflatten(flat, ts);
    CHECK(max_abs_diff(back, ts) == 0.0);
}

TEST_CASE("local_update: zero gradient, one step, chained steps") {
    Tensor target = Tensor::vector({1.0, -2.0});
    std::vector<Tensor> at_target = {target};
    std::vector<Tensor> stay = local_update(quadratic(target), at_target, 3, 1e-3);
    CHECK(max_abs_diff(stay, at_target) == 0.0);

    std::vector<Tensor> start = {Tensor::vector({0.0, 0.0})};
    std::vector<Tensor> one = local_update(quadratic(target), start, 1, 1e-3);
    AdamState st;
    st.init_like(start);
    std::vector<Tensor> manual = start;
    st.step(manual, {sub(manual[0], target)});
    CHECK(max_abs_diff(one, manual) < 1e-15);

    std::vector<Tensor> two = local_update(quadratic(target), start, 2, 1e-3);
    st.step(manual, {sub(manual[0], target)});
    CHECK(max_abs_diff(two, manual) < 1e-15);
}

TEST_CASE("aggregate_weighted basics") {
    std::vector<Tensor> a = {Tensor::scalar(0.0)}, b = {Tensor::scalar(4.0)};
    CHECK(aggregate_weighted({a, a}, {2, 5})[0].item() == doctest::Approx(0.0));
    CHECK(aggregate_weighted({a, b}, {1, 3})[0].item() == doctest::Approx(3.0));
    CHECK(aggregate_weighted({a, b}, {10, 30})[0].item() == doctest::Approx(3.0));
    CHECK_THROWS(aggregate_weighted({}, {}));
}

TEST_CASE("fedave: full participation l=1 equals the centralized step") {
    // Identical client objectives make the mean gradient equal each local
    // gradient, so one aggregated epoch must reproduce one ADAM step exactly.
    Tensor target = Tensor::vector({0.5, -1.5, 2.0});
    std::vector<LocalObjective> clients(4, quadratic(target));
    FedConfig cfg;
    cfg.total_clients = 4;
    cfg.m_select = 4;
    cfg.local_steps = 1;
    cfg.global_epochs = 1;
    std::vector<Tensor> init = {Tensor::vector({0.0, 0.0, 0.0})};

    Rng rng(1);
    OverheadLedger ledger;
    std::vector<Tensor> fed = fedave_train(clients, init, cfg, rng, ledger, "test");

    AdamState st;
    st.init_like(init);
    st.lr = cfg.lr;
    std::vector<Tensor> central = init;
    st.step(central, {sub(central[0], target)});
    CHECK(max_abs_diff(fed, central) <= 1e-10);
}

TEST_CASE("fedave: ledger counts 2 b Q T M bits") {
    Tensor target = Tensor::vector({1.0, 1.0});
    std::vector<LocalObjective> clients(5, quadratic(target));
    FedConfig cfg;
    cfg.total_clients = 5;
    cfg.m_select = 3;
    cfg.local_steps = 2;
    cfg.global_epochs = 7;
    cfg.bits_per_float = 32;
    std::vector<Tensor> init = {Tensor::vector({0.0, 0.0})};
    Rng rng(2);
    OverheadLedger ledger;
    fedave_train(clients, init, cfg, rng, ledger, "phase");
    const std::uint64_t expected = 2ull * 32 * 2 * 7 * 3;
    CHECK(ledger.total() == expected);
    CHECK(ledger.total() ==
          t_fedave(32, 2, cfg.global_epochs, cfg.m_select, 0, 0, 0));
}

TEST_CASE("fedave: single client multi-step equals chained local training") {
    Tensor target = Tensor::vector({2.0, -1.0});
    std::vector<LocalObjective> clients = {quadratic(target)};
    FedConfig cfg;
    cfg.total_clients = 1;
    cfg.m_select = 1;
    cfg.local_steps = 3;
    cfg.global_epochs = 4;
    std::vector<Tensor> init = {Tensor::vector({0.0, 0.0})};
    Rng rng(3);
    OverheadLedger ledger;
    std::vector<Tensor> fed = fedave_train(clients, init, cfg, rng, ledger, "t");

    // Centralized path with ADAM moments reset every "epoch".
    std::vector<Tensor> p = init;
    for (int epoch = 0; epoch < 4; ++epoch) p = local_update(clients[0], p, 3, cfg.lr);
    CHECK(max_abs_diff(fed, p) <= 1e-12);
}

TEST_CASE("sparsify: delta 1 is the identity") {
    Rng rng(4);
    Tensor g = Tensor::vector({0.3, -2.0, 0.0, 1.5});
    SparsifiedGradient s = sparsify(g, 1.0, rng);
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(s.values(i) == doctest::Approx(g(i)));
        if (g(i) != 0.0) CHECK(s.probs(i) == doctest::Approx(1.0));
    }
}

TEST_CASE("sparsify: hand-traced case [4,1,1], delta 0.5") {
    Rng rng(5);
    SparsifiedGradient s = sparsify(Tensor::vector({4, 1, 1}), 0.5, rng);
    CHECK(s.probs(0) == doctest::Approx(1.0));
    CHECK(s.probs(1) == doctest::Approx(0.25));
    CHECK(s.probs(2) == doctest::Approx(0.25));
}

TEST_CASE("sparsify: uniform magnitudes get uniform probability delta") {
    Rng rng(6);
    SparsifiedGradient s = sparsify(Tensor::vector({2, -2, 2, 2, -2}), 0.3, rng);
    for (std::size_t i = 0; i < 5; ++i) CHECK(s.probs(i) == doctest::Approx(0.3));
}

TEST_CASE("sparsify: probability mass within 1% of delta Q") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor g = Tensor::zeros({20});
        for (double& v : g.data) v = rng.gaussian(0, 1);
        for (double delta : {0.2, 0.5, 0.8}) {
            SparsifiedGradient s = sparsify(g, delta, rng);
            double sum = 0;
            for (double p : s.probs.data) sum += p;
            CHECK(std::abs(sum - delta * 20) / (delta * 20) <= 0.0101);
        }
    }
}

TEST_CASE("sparsify: matches the bisection water-filling oracle for Q <= 6") {
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t q = std::size_t(rng.uniform_int(2, 6));
        Tensor g = Tensor::zeros({q});
        for (double& v : g.data) v = rng.gaussian(0, 1) + 0.05;
        double delta = rng.uniform(0.3, 0.9);

        // Oracle: find lambda by bisection so sum min(lambda |g|, 1) = delta Q.
        double lo = 0, hi = 1e9;
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (lo + hi), sum = 0;
            for (double v : g.data) sum += std::min(mid * std::abs(v), 1.0);
            (sum < delta * double(q) ? lo : hi) = mid;
        }
        double lambda = 0.5 * (lo + hi);

        SparsifiedGradient s = sparsify(g, delta, rng);
        for (std::size_t i = 0; i < q; ++i) {
            double oracle = std::min(lambda * std::abs(g(i)), 1.0);
            CHECK(std::abs(s.probs(i) - oracle) <= 0.02 * std::max(oracle, 1e-3));
        }
    }
}

TEST_CASE("sparsify: unbiased over many draws") {
    Rng rng(9);
    Tensor g = Tensor::vector({1.2, -0.4, 0.05, 0.8, -2.0, 0.3});
    const int n = 100000;
    Tensor mean = Tensor::zeros({6});
    Tensor m2 = Tensor::zeros({6});
    for (int i = 0; i < n; ++i) {
        SparsifiedGradient s = sparsify(g, 0.5, rng);
        for (std::size_t j = 0; j < 6; ++j) {
            mean(j) += s.values(j);
            m2(j) += s.values(j) * s.values(j);
        }
    }
    for (std::size_t j = 0; j < 6; ++j) {
        double mu = mean(j) / n;
        double var = m2(j) / n - mu * mu;
        double se = std::sqrt(std::max(var, 1e-30) / n);
        CHECK(std::abs(mu - g(j)) <= 4.0 * se + 1e-12);
    }
}

TEST_CASE("sparsify: all-zero gradient yields a valid zero output") {
    Rng rng(10);
    SparsifiedGradient s = sparsify(Tensor::zeros({5}), 0.5, rng);
    for (double v : s.values.data) CHECK(v == 0.0);
}

TEST_CASE("fedgs aggregate: delta 1 single client equals a server ADAM step") {
    Tensor target = Tensor::vector({1.0, -1.0});
    std::vector<LocalObjective> clients = {quadratic(target)};
    FedConfig cfg;
    cfg.total_clients = 1;
    cfg.m_select = 1;
    cfg.global_epochs = 1;
    cfg.delta = 1.0;
    std::vector<Tensor> init = {Tensor::vector({0.0, 0.0})};
    Rng rng(11);
    OverheadLedger ledger;
    std::vector<Tensor> fed = fedgs_train(clients, init, cfg, rng, ledger, "t");

    AdamState st;
    st.init_like(init);
    std::vector<Tensor> central = init;
    st.step(central, {sub(central[0], target)});
    CHECK(max_abs_diff(fed, central) <= 1e-12);
}

TEST_CASE("fedgs aggregate: opposite gradients cancel") {
    std::vector<SparsifiedGradient> sg(2);
    sg[0].q = sg[1].q = 2;
    sg[0].values = Tensor::vector({1.0, -2.0});
    sg[1].values = Tensor::vector({-1.0, 2.0});
    Tensor agg = fedgs_aggregate(sg, {3, 3});
    CHECK(agg(0) == doctest::Approx(0.0));
    CHECK(agg(1) == doctest::Approx(0.0));
}

TEST_CASE("fedgs: expected sparsified aggregate matches the dense one") {
    Rng rng(12);
    Tensor g = Tensor::vector({0.9, -0.2, 1.4, -0.7});
    Tensor acc = Tensor::zeros({4});
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        SparsifiedGradient s = sparsify(g, 0.6, rng);
        for (std::size_t j = 0; j < 4; ++j) acc(j) += s.values(j);
    }
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(acc(j) / n == doctest::Approx(g(j)).epsilon(0.08));
}

TEST_CASE("overhead formulas") {
    CHECK(sample_bits(16, 16, 32) == 1089ull * 32);
    CHECK(t_fedave(32, 10, 1, 1, 0, 0, 0) == 640);
    CHECK(t_cl({{16, 16}, {16, 16}}, 32) == 2ull * 1089 * 32);

    Rng rng(13);
    for (int i = 0; i < 20; ++i) {
        std::uint64_t q_id = std::uint64_t(rng.uniform_int(1, 500));
        std::uint64_t q_ro = std::uint64_t(rng.uniform_int(1, 500));
        int t_id = rng.uniform_int(1, 20), t_ro = rng.uniform_int(1, 20);
        int m_id = rng.uniform_int(1, 10), m_ro = rng.uniform_int(1, 10);
        double fa = double(t_fedave(32, q_id, t_id, m_id, q_ro, t_ro, m_ro));
        double fg = t_fedgs(32, q_id, t_id, m_id, q_ro, t_ro, m_ro, 1.0);
        CHECK(fg >= fa / 2.0);
        CHECK(fg == doctest::Approx(fa + double(q_id) * t_id + double(q_ro) * t_ro));
    }
}

TEST_CASE("deterministic replay of a federated run") {
    Tensor t1 = Tensor::vector({1.0, 0.5}), t2 = Tensor::vector({-0.5, 2.0});
    std::vector<LocalObjective> clients = {quadratic(t1), quadratic(t2), quadratic(t1)};
    FedConfig cfg;
    cfg.total_clients = 3;
    cfg.m_select = 2;
    cfg.global_epochs = 5;
    cfg.delta = 0.7;
    std::vector<Tensor> init = {Tensor::vector({0.1, 0.1})};
    for (bool gs : {false, true}) {
        Rng r1(99), r2(99);
        OverheadLedger l1, l2;
        std::vector<Tensor> a = gs ? fedgs_train(clients, init, cfg, r1, l1, "x")
                                   : fedave_train(clients, init, cfg, r1, l1, "x");
        std::vector<Tensor> b = gs ? fedgs_train(clients, init, cfg, r2, l2, "x")
                                   : fedave_train(clients, init, cfg, r2, l2, "x");
        CHECK(max_abs_diff(a, b) == 0.0);
        CHECK(l1.total() == l2.total());
    }
}
