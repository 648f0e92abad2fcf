#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedsim/oracles.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/trigger.hpp"

using namespace fedsim;

namespace {

// Generator whose network ignores the input and emits a fixed vector.
TriggerGenerator constant_generator(const std::vector<double>& raw, double epsilon) {
    int dim = static_cast<int>(raw.size());
    TriggerGenerator gen;
    gen.epsilon = epsilon;
    gen.net = Network(Shape{1, 1, dim});
    gen.net.add_dense(dim);
    for (int j = 0; j < dim; ++j) gen.net.params()[static_cast<std::size_t>(dim) * dim + j] = raw[j];
    return gen;
}

Matrix random_batch(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.uniform();
    return m;
}

Network trained_toy_classifier(const Dataset& ds, std::uint64_t seed, int steps = 300) {
    Network net(ds.shape);
    net.add_dense(32).add_relu().add_dense(ds.num_classes);
    net.init_params(seed);
    Matrix x = ds.all_features();
    std::vector<int> y = ds.all_labels();
    SgdOptimizer opt(0.9, 1e-4);
    for (int s = 0; s < steps; ++s) {
        Network::LossGrad lg = net.loss_and_grad(x, y);
        opt.step(net.params(), lg.param_grad, 0.1);
    }
    return net;
}

}  // namespace

TEST_CASE("projection rescales an over-budget raw output to exactly epsilon") {
    const double eps = 0.5;
    std::vector<double> raw = {0.6, 0.8};  // norm 1.0 = 2 eps
    TriggerGenerator gen = constant_generator(raw, eps);
    std::vector<double> x = {0.3, 0.4};
    std::vector<double> noise = generate_noise(gen, x);
    CHECK(l2_norm(noise) == doctest::Approx(eps).epsilon(1e-12));
    // direction preserved
    CHECK(noise[0] / noise[1] == doctest::Approx(raw[0] / raw[1]).epsilon(1e-12));
}

TEST_CASE("projection leaves an in-budget raw output unchanged") {
    const double eps = 1.0;
    std::vector<double> raw = {0.3, 0.4};  // norm 0.5 = eps/2
    TriggerGenerator gen = constant_generator(raw, eps);
    std::vector<double> noise = generate_noise(gen, std::vector<double>{0.0, 0.0});
    CHECK(noise[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(noise[1] == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("zero-weight generator emits zero noise and identity trigger") {
    TriggerGenerator gen = constant_generator({0.0, 0.0, 0.0}, 1.0);
    std::vector<double> x = {0.1, 0.5, 0.9};
    std::vector<double> noise = generate_noise(gen, x);
    CHECK(l2_norm(noise) == 0.0);
    CHECK(apply_trigger(gen, x) == x);
}

TEST_CASE("vanishing epsilon makes the trigger the identity") {
    TriggerGenerator gen = make_dense_generator(Shape{1, 1, 6}, 8, 1e-15, 3);
    std::vector<double> x = {0.2, 0.4, 0.6, 0.8, 0.5, 0.3};
    std::vector<double> t = apply_trigger(gen, x);
    for (int i = 0; i < 6; ++i) CHECK(std::abs(t[i] - x[i]) <= 1e-14);
}

TEST_CASE("trigger on a zero image clamps negative noise") {
    std::vector<double> raw = {0.3, -0.2, 0.1, -0.4};
    TriggerGenerator gen = constant_generator(raw, 10.0);
    std::vector<double> x(4, 0.0);
    std::vector<double> t = apply_trigger(gen, x);
    CHECK(t[0] == doctest::Approx(0.3));
    CHECK(t[1] == doctest::Approx(0.0));
    CHECK(t[2] == doctest::Approx(0.1));
    CHECK(t[3] == doctest::Approx(0.0));
}

TEST_CASE("projection bound holds over random generators and inputs") {
    Rng rng(99);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        double eps = rng.uniform(0.05, 3.0);
        TriggerGenerator gen = make_dense_generator(Shape{1, 1, 10}, 12, eps, rng.bits());
        // random parameter rescale so raw outputs regularly exceed the budget
        double blow = rng.uniform(0.5, 20.0);
        for (double& p : gen.net.params()) p *= blow;
        Matrix x = random_batch(8, 10, rng.bits());
        Matrix noise = generate_noise(gen, x);
        for (int r = 0; r < noise.rows; ++r) {
            std::vector<double> row(noise.row(r), noise.row(r) + noise.cols);
            CHECK(l2_norm(row) <= eps + 1e-9);
            ++checked;
        }
    }
    CHECK(checked == 1600);
}

TEST_CASE("stage one gradient matches finite differences") {
    // classifier fixed, gradient flows only through the trigger chain
    Dataset ds = gen_synthetic(4, 40, 6, 0.15, 5);
    Network cls = trained_toy_classifier(ds, 7, 100);
    TriggerGenerator gen = make_dense_generator(ds.shape, 8, 0.8, 11);
    // rescale so some rows project and some do not
    for (double& p : gen.net.params()) p *= 3.0;

    Matrix x = ds.gather({0, 1, 2, 3, 4, 5}, 0, 6);
    std::vector<int> targets(6, 2);
    StageOneGrad sg = stage_one_loss_and_grad(gen, cls, x, targets);

    Rng rng(13);
    const double h = 1e-6;
    int active = 0;
    for (int probe = 0; probe < 60; ++probe) {
        std::size_t i = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(gen.net.param_count())));
        TriggerGenerator plus = gen, minus = gen;
        plus.net.params()[i] += h;
        minus.net.params()[i] -= h;
        double lp = 0.0, lm = 0.0;
        {
            Matrix tp = apply_trigger(plus, x);
            lp = cls.loss(tp, targets);
            Matrix tm = apply_trigger(minus, x);
            lm = cls.loss(tm, targets);
        }
        double fd = (lp - lm) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(sg.xi_grad[i]), 1e-6});
        CHECK(std::abs(fd - sg.xi_grad[i]) / denom < 1e-4);
        if (sg.xi_grad[i] != 0.0) ++active;
    }
    CHECK(active > 0);
}

TEST_CASE("zero epochs leaves the generator untouched") {
    Dataset ds = gen_synthetic(3, 30, 5, 0.1, 21);
    Network cls = trained_toy_classifier(ds, 3, 50);
    TriggerGenerator gen = make_dense_generator(ds.shape, 8, 1.0, 17);
    std::vector<double> before = gen.net.params();
    std::vector<int> bd = {0, 1, 2, 3, 4};
    train_generator(gen, cls, ds, bd, {1}, 0, 0.01, 32, 5);
    CHECK(gen.net.params() == before);
}

TEST_CASE("constant-confident classifier induces no generator drift") {
    Dataset ds = gen_synthetic(3, 30, 5, 0.1, 23);
    // classifier with zero weights and a large bias on the target logit
    Network cls(ds.shape);
    cls.add_dense(3);
    cls.params()[static_cast<std::size_t>(5) * 3 + 1] = 60.0;  // bias of logit 1
    TriggerGenerator gen = make_dense_generator(ds.shape, 8, 1.0, 29);
    std::vector<double> before = gen.net.params();
    std::vector<int> bd = {0, 1, 2, 3, 4, 5, 6, 7};
    train_generator(gen, cls, ds, bd, {1}, 1, 0.01, 8, 5);
    double drift = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) drift = std::max(drift, std::abs(gen.net.params()[i] - before[i]));
    CHECK(drift < 1e-8);
}

TEST_CASE("stage one reaches a high target rate on the toy task") {
    Dataset ds = gen_synthetic(10, 400, 16, 0.1, 31);
    Network cls = trained_toy_classifier(ds, 37, 300);
    TriggerGenerator gen = make_dense_generator(ds.shape, 64, 2.0, 41);
    std::vector<int> bd;
    for (int i = 0; i < 80; ++i) bd.push_back(i);
    AttackTargeting targeting{4};
    StageOneStats stats = train_generator(gen, cls, ds, bd, targeting, 20, 0.01, 32, 43);
    CHECK(stats.final_loss < stats.initial_loss);

    Matrix poisoned = apply_trigger(gen, ds.gather(bd, 0, static_cast<int>(bd.size())));
    std::vector<int> pred = cls.predict(poisoned);
    int hits = 0;
    for (int p : pred)
        if (p == targeting.target_label) ++hits;
    CHECK(static_cast<double>(hits) / pred.size() >= 0.8);
}

TEST_CASE("stage one never mutates the frozen classifier") {
    Dataset ds = gen_synthetic(5, 60, 8, 0.1, 51);
    Network cls = trained_toy_classifier(ds, 53, 80);
    std::vector<double> before = cls.params();
    TriggerGenerator gen = make_dense_generator(ds.shape, 16, 1.5, 55);
    std::vector<int> bd = {0, 2, 4, 6, 8, 10};
    train_generator(gen, cls, ds, bd, {0}, 5, 0.01, 4, 57);
    CHECK(cls.params() == before);  // bit identical
}

TEST_CASE("trained triggers are sample specific") {
    Dataset ds = gen_synthetic(10, 300, 16, 0.1, 61);
    Network cls = trained_toy_classifier(ds, 63, 200);
    TriggerGenerator gen = make_dense_generator(ds.shape, 64, 2.0, 65);
    std::vector<int> bd;
    for (int i = 0; i < 64; ++i) bd.push_back(i);
    train_generator(gen, cls, ds, bd, {3}, 20, 0.01, 32, 67);

    Rng rng(69);
    int distinct = 0;
    const int pairs = 50;
    for (int t = 0; t < pairs; ++t) {
        int i = rng.uniform_int(ds.size()), j = rng.uniform_int(ds.size());
        if (ds.samples[i].features == ds.samples[j].features) {
            ++distinct;
            continue;
        }
        std::vector<double> ni = generate_noise(gen, ds.samples[i].features);
        std::vector<double> nj = generate_noise(gen, ds.samples[j].features);
        double diff = 0.0;
        for (std::size_t k = 0; k < ni.size(); ++k) diff = std::max(diff, std::abs(ni[k] - nj[k]));
        if (diff > 1e-9) ++distinct;
    }
    CHECK(distinct >= static_cast<int>(0.9 * pairs));
}

TEST_CASE("larger trigger budget cannot hurt the stage one objective") {
    Dataset ds = gen_synthetic(10, 300, 16, 0.1, 71);
    Network cls = trained_toy_classifier(ds, 73, 200);
    std::vector<int> bd;
    for (int i = 0; i < 64; ++i) bd.push_back(i);
    AttackTargeting targeting{6};

    auto final_loss = [&](double eps) {
        TriggerGenerator gen = make_dense_generator(ds.shape, 32, eps, 75);
        return train_generator(gen, cls, ds, bd, targeting, 20, 0.01, 32, 77).final_loss;
    };
    CHECK(final_loss(2.0) <= final_loss(0.5));
}

TEST_CASE("generator training is deterministic") {
    Dataset ds = gen_synthetic(5, 100, 8, 0.1, 81);
    Network cls = trained_toy_classifier(ds, 83, 100);
    auto run = [&] {
        TriggerGenerator gen = make_dense_generator(ds.shape, 16, 1.0, 85);
        std::vector<int> bd = {1, 3, 5, 7, 9, 11, 13, 15};
        train_generator(gen, cls, ds, bd, {2}, 10, 0.01, 4, 87);
        return gen.net.params();
    };
    CHECK(run() == run());
}
