#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"

#include "xsadapt/errors.hpp"
#include "xsadapt/network.hpp"

using namespace xsa;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng) {
    Tensor t(shape);
    for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

Network toy_net() {
    Network net({3});
    net.add({.kind = LayerKind::dense, .in = 3, .out = 3});
    net.add({.kind = LayerKind::relu});
    net.add({.kind = LayerKind::dense, .in = 3, .out = 4});
    net.add({.kind = LayerKind::softmax});
    return net;
}

double mean_loss(Network& net, const Tensor& x, std::span<const int> y) {
    return cross_entropy(net.forward(x, Mode::eval).output(), y).loss;
}

}  // namespace

TEST_CASE("cross entropy closed forms") {
    Tensor p({1, 3});
    p.data = {0.0, 1.0, 0.0};
    const std::vector<int> one{1};
    CHECK(cross_entropy(p, one).loss == doctest::Approx(0.0));

    Tensor u({2, 5});
    u.fill(0.2);
    const std::vector<int> two{0, 4};
    CHECK(cross_entropy(u, two).loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));

    Tensor h({1, 2});
    h.data = {0.5, 0.5};
    const std::vector<int> zero{0};
    const auto r = cross_entropy(h, zero);
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(r.grad_logits.data[0] == doctest::Approx(-0.5));
    CHECK(r.grad_logits.data[1] == doctest::Approx(0.5));

    const auto clamped = cross_entropy(p, zero);
    CHECK(clamped.clamped == 1);
    CHECK(clamped.loss == doctest::Approx(-std::log(1e-12)));
    CHECK(std::isfinite(clamped.loss));
}

TEST_CASE("cross entropy gradient is (p - onehot) / batch") {
    Rng rng(1);
    Tensor p({4, 3});
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) s += (p.data[r * 3 + k] = rng.uniform(0.1, 1.0));
        for (std::size_t k = 0; k < 3; ++k) p.data[r * 3 + k] /= s;
    }
    const std::vector<int> y{0, 2, 1, 2};
    const auto res = cross_entropy(p, y);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t k = 0; k < 3; ++k) {
            const double onehot = static_cast<int>(k) == y[r] ? 1.0 : 0.0;
            CHECK(res.grad_logits.data[r * 3 + k] == doctest::Approx((p.data[r * 3 + k] - onehot) / 4.0));
        }
    Tensor soft({4, 3});
    for (std::size_t r = 0; r < 4; ++r) soft.data[r * 3 + static_cast<std::size_t>(y[r])] = 1.0;
    const auto res2 = cross_entropy(p, soft);
    CHECK(res2.loss == doctest::Approx(res.loss));
    CHECK(res2.grad_logits == res.grad_logits);
}

TEST_CASE("zero weights give uniform probabilities") {
    Network net = toy_net();
    net.init(3);
    for (auto* p : net.params()) p->value.fill(0.0);
    Rng rng(2);
    const Tensor x = random_tensor({5, 3}, rng);
    const Trace t = net.forward(x, Mode::eval);
    for (double v : t.output().data) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("network gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Network net = toy_net();
        net.init(seed);
        Rng rng(seed + 100);
        Tensor x = random_tensor({6, 3}, rng);
        const std::vector<int> y{0, 1, 2, 3, 1, 0};
        const Trace trace = net.forward(x, Mode::train, seed);
        const auto loss = cross_entropy(trace.output(), y);
        const Gradients g = net.backward(trace, loss.grad_logits, 0);
        auto params = net.params();
        REQUIRE(g.size() == params.size());
        double worst = 0.0;
        for (std::size_t p = 0; p < params.size(); ++p)
            for (std::size_t i = 0; i < params[p]->value.size(); ++i) {
                double& v = params[p]->value.data[i];
                const double orig = v;
                v = orig + 1e-4;
                const double lp = mean_loss(net, x, y);
                v = orig - 1e-4;
                const double lm = mean_loss(net, x, y);
                v = orig;
                const double num = (lp - lm) / 2e-4;
                worst = std::max(worst, std::abs(num - g[p].data[i]) / std::max({std::abs(num), 1e-3}));
            }
        CAPTURE(seed);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("zero loss gradient gives zero parameter gradients") {
    Network net = toy_net();
    net.init(5);
    Rng rng(5);
    const Trace trace = net.forward(random_tensor({3, 3}, rng), Mode::train, 1);
    Tensor zero({3, 4});
    for (const auto& g : net.backward(trace, zero, 0))
        for (double v : g.data) CHECK(v == 0.0);
}

TEST_CASE("backward needs a train-mode trace") {
    Network net = toy_net();
    net.init(1);
    Rng rng(1);
    const Trace trace = net.forward(random_tensor({2, 3}, rng), Mode::eval);
    Tensor g({2, 4});
    CHECK_THROWS_AS(net.backward(trace, g, 0), ContractError);
}

TEST_CASE("frozen prefix yields no gradient entries") {
    Network net = toy_net();
    net.set_frozen_prefix(2);
    net.init(1);
    Rng rng(1);
    const Trace trace = net.forward(random_tensor({2, 3}, rng), Mode::train, 1);
    Tensor g({2, 4});
    g.fill(0.1);
    CHECK(net.backward(trace, g).size() == 2);
    CHECK(net.trainable_params().size() == 2);
    CHECK(net.backward(trace, g, 0).size() == 4);
}

TEST_CASE("shape mismatches are rejected") {
    Network net({3});
    net.add({.kind = LayerKind::dense, .in = 3, .out = 2});
    CHECK_THROWS_AS(net.add({.kind = LayerKind::dense, .in = 3, .out = 2}), ConfigError);
    net.add({.kind = LayerKind::softmax});
    net.init(0);
    Tensor bad({2, 4});
    CHECK_THROWS_AS(net.forward(bad, Mode::eval), DimensionError);
}

TEST_CASE("eval forward is deterministic and train forward is seeded") {
    Network net({6});
    net.add({.kind = LayerKind::dense, .in = 6, .out = 8});
    net.add({.kind = LayerKind::dropout, .rate = 0.5});
    net.add({.kind = LayerKind::dense, .in = 8, .out = 3});
    net.add({.kind = LayerKind::softmax});
    net.init(7);
    Rng rng(7);
    const Tensor x = random_tensor({4, 6}, rng);
    CHECK(net.forward(x, Mode::eval).output() == net.forward(x, Mode::eval).output());
    CHECK(net.forward(x, Mode::train, 3).output() == net.forward(x, Mode::train, 3).output());
    CHECK_FALSE(net.forward(x, Mode::train, 3).output() == net.forward(x, Mode::train, 4).output());
    const Trace t = net.forward(x, Mode::eval);
    const Tensor& o = t.output();
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(o.data[r * 3 + k] > 0.0);
            CHECK(o.data[r * 3 + k] < 1.0);
            s += o.data[r * 3 + k];
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("init is reproducible per seed") {
    Network a = toy_net(), b = toy_net(), c = toy_net();
    a.init(11);
    b.init(11);
    c.init(12);
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != c.hash());
    Network copy(a);
    CHECK(copy.hash() == a.hash());
    copy.params()[0]->value.data[0] += 1.0;
    CHECK(copy.hash() != a.hash());
}

namespace {

Param scalar_param(double v, bool l2 = false) { return Param{"theta", Tensor({1}, v), l2}; }

}  // namespace

TEST_CASE("adam: zero gradient and no decay leaves parameters unchanged") {
    Param p = scalar_param(0.7);
    std::vector<Param*> ps{&p};
    AdamState st = AdamState::for_params(ps, 0.01);
    std::vector<Tensor> g{Tensor({1})};
    for (int i = 0; i < 5; ++i) adam_step(ps, g, st.slots, st, 0.0);
    CHECK(p.value.data[0] == 0.7);
}

TEST_CASE("adam: first step moves each parameter by the learning rate") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Param p{"w", Tensor({7}), false};
        for (auto& v : p.value.data) v = rng.uniform(-1, 1);
        const Tensor before = p.value;
        std::vector<Param*> ps{&p};
        const double lr = rng.uniform(1e-4, 1e-1);
        AdamState st = AdamState::for_params(ps, lr);
        Tensor grad({7});
        for (auto& v : grad.data) v = rng.uniform(0.5, 3.0) * (rng.below(2) ? 1.0 : -1.0);
        std::vector<Tensor> g{grad};
        adam_step(ps, g, st.slots, st, 0.0);
        for (std::size_t i = 0; i < 7; ++i) {
            const double step = p.value.data[i] - before.data[i];
            // |g| / (|g| + eps) differs from 1 by ~1e-8 relative
            CHECK(std::abs(std::abs(step) - lr) < lr * 1e-7);
            CHECK((step < 0) == (grad.data[i] > 0));
        }
        CHECK(st.slots[0].step == 1);
    }
}

TEST_CASE("adam: minimises theta squared") {
    Param p = scalar_param(1.0);
    std::vector<Param*> ps{&p};
    AdamState st = AdamState::for_params(ps, 0.1);
    for (int i = 0; i < 200; ++i) {
        std::vector<Tensor> g{Tensor({1}, 2.0 * p.value.data[0])};
        adam_step(ps, g, st.slots, st, 0.0);
    }
    CHECK(std::abs(p.value.data[0]) < 1e-2);
}

TEST_CASE("adam: matches a scalar reimplementation") {
    // Independent scalar Adam with L2 as an added gradient term.
    Param p = scalar_param(0.8, true);
    Param q = scalar_param(0.8, false);
    std::vector<Param*> ps{&p, &q};
    AdamState st = AdamState::for_params(ps, 0.05);
    double t1 = 0.8, m1 = 0, v1 = 0, t2 = 0.8, m2 = 0, v2 = 0;
    const double lambda = 0.01;
    for (int step = 1; step <= 30; ++step) {
        const double g = std::sin(step);
        std::vector<Tensor> grads{Tensor({1}, g), Tensor({1}, g)};
        adam_step(ps, grads, st.slots, st, lambda);
        auto ref = [&](double& th, double& m, double& v, double gr) {
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            const double mh = m / (1 - std::pow(0.9, step)), vh = v / (1 - std::pow(0.999, step));
            th -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
        };
        ref(t1, m1, v1, g + lambda * t1);
        ref(t2, m2, v2, g);
        CHECK(p.value.data[0] == doctest::Approx(t1).epsilon(1e-12));
        CHECK(q.value.data[0] == doctest::Approx(t2).epsilon(1e-12));
    }
}

TEST_CASE("adam: non-finite gradient aborts before any update") {
    Param a = scalar_param(1.0), b = scalar_param(2.0);
    std::vector<Param*> ps{&a, &b};
    AdamState st = AdamState::for_params(ps, 0.1);
    std::vector<Tensor> g{Tensor({1}, 1.0), Tensor({1}, std::nan(""))};
    CHECK_THROWS_AS(adam_step(ps, g, st.slots, st, 0.0), NumericError);
    CHECK(a.value.data[0] == 1.0);
    CHECK(st.slots[0].step == 0);
}

TEST_CASE("training is bit-reproducible") {
    auto run = [] {
        Network net = toy_net();
        net.init(21);
        auto params = net.params();
        AdamState st = AdamState::for_params(params, 0.01);
        Rng rng(4);
        const Tensor x = random_tensor({8, 3}, rng);
        const std::vector<int> y{0, 1, 2, 3, 0, 1, 2, 3};
        for (std::uint64_t i = 0; i < 25; ++i) {
            const Trace t = net.forward(x, Mode::train, i);
            const auto l = cross_entropy(t.output(), y);
            adam_step(params, net.backward(t, l.grad_logits, 0), st.slots, st, 0.0);
        }
        return net.hash();
    };
    CHECK(run() == run());
}
