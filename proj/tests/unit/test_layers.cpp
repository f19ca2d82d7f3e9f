#include <algorithm>
#include <cmath>
#include <functional>

#include "doctest.h"
#include "gradcheck.hpp"
#include "helpers.hpp"

#include "xsadapt/errors.hpp"
#include "xsadapt/layers.hpp"

using namespace xsa;
using namespace gradcheck;

namespace {

constexpr int kSeeds = 20;

void sweep(const std::function<std::unique_ptr<Layer>()>& make, const Shape& in, Mode mode, bool kinks = false,
           double scale = 1.0) {
    for (int s = 0; s < kSeeds; ++s) {
        const auto seed = static_cast<std::uint64_t>(1000 + s);
        auto layer = make();
        Rng rng(seed);
        layer->init(rng);
        Tensor x = random_tensor(in, rng, scale);
        if (kinks) avoid_kinks(x);
        const auto res = grad_check(*layer, x, mode, seed);
        CAPTURE(seed);
        CHECK(res.checked > 0);
        CHECK(res.worst < kTolerance);
    }
}

LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw) {
    return LayerSpec{.kind = LayerKind::conv2d, .in = in, .out = out, .kernel_h = kh, .kernel_w = kw,
                     .stride_h = sh, .stride_w = sw};
}

}  // namespace

TEST_CASE("gradient: dense") {
    sweep([] { return make_layer({.kind = LayerKind::dense, .in = 7, .out = 5}); }, {4, 7}, Mode::train);
}

TEST_CASE("gradient: conv1d") {
    sweep([] { return make_layer({.kind = LayerKind::conv1d, .in = 3, .out = 4, .kernel_w = 5, .stride_w = 1}); },
          {2, 3, 12}, Mode::train);
    sweep([] { return make_layer({.kind = LayerKind::conv1d, .in = 2, .out = 3, .kernel_w = 3, .stride_w = 2}); },
          {2, 2, 11}, Mode::train);
}

TEST_CASE("gradient: conv2d") {
    sweep([] { return make_layer(conv2d(2, 3, 3, 2, 1, 1)); }, {2, 2, 6, 5}, Mode::train);
    sweep([] { return make_layer(conv2d(1, 2, 6, 3, 3, 3)); }, {2, 1, 12, 9}, Mode::train);
}

TEST_CASE("gradient: relu") {
    sweep([] { return make_layer({.kind = LayerKind::relu}); }, {3, 10}, Mode::train, true);
}

TEST_CASE("gradient: dropout") {
    sweep([] { return make_layer({.kind = LayerKind::dropout, .rate = 0.3}); }, {3, 10}, Mode::train);
    sweep([] { return make_layer({.kind = LayerKind::dropout, .rate = 0.3}); }, {3, 10}, Mode::eval);
}

TEST_CASE("gradient: batchnorm") {
    sweep([] { return make_layer({.kind = LayerKind::batchnorm, .in = 4}); }, {6, 4}, Mode::train);
    sweep([] { return make_layer({.kind = LayerKind::batchnorm, .in = 3}); }, {4, 3, 5, 2}, Mode::train);
    sweep([] { return make_layer({.kind = LayerKind::batchnorm, .in = 3}); }, {4, 3, 5}, Mode::eval);
}

TEST_CASE("gradient: global max pool") {
    // Distinct, well-separated values keep the argmax stable under the step.
    for (int s = 0; s < kSeeds; ++s) {
        const auto seed = static_cast<std::uint64_t>(2000 + s);
        auto layer = make_layer({.kind = LayerKind::global_max_pool_1d});
        Rng rng(seed);
        Tensor x({3, 2, 7});
        std::vector<double> vals(x.size());
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
        rng.shuffle(vals.begin(), vals.end());
        x.data = vals;
        CHECK(grad_check(*layer, x, Mode::train, seed).worst < kTolerance);
    }
}

TEST_CASE("gradient: softmax") {
    sweep([] { return make_layer({.kind = LayerKind::softmax}); }, {3, 6}, Mode::train, false, 3.0);
}

TEST_CASE("gradient: flatten") {
    sweep([] { return make_layer({.kind = LayerKind::flatten}); }, {2, 3, 4}, Mode::train);
}

TEST_CASE("gradient: branch concat") {
    LayerSpec spec{.kind = LayerKind::branch_concat};
    spec.children = {{conv2d(2, 3, 3, 1, 1, 1), {.kind = LayerKind::batchnorm, .in = 3}},
                     {conv2d(2, 2, 2, 2, 1, 1)}};
    sweep([&] { return make_layer(spec); }, {3, 2, 5, 4}, Mode::train);
}

TEST_CASE("gradient: stream split") {
    LayerSpec spec{.kind = LayerKind::stream_split, .streams = 2};
    spec.children = {{conv2d(1, 2, 3, 1, 1, 1), {.kind = LayerKind::batchnorm, .in = 2}},
                     {conv2d(1, 3, 2, 2, 1, 1)}};
    sweep([&] { return make_layer(spec); }, {3, 6, 7}, Mode::train);
}

TEST_CASE("conv1d matches the direct sum") {
    for (int s = 0; s < 10; ++s) {
        Rng rng(static_cast<std::uint64_t>(s));
        const std::size_t stride = 1 + static_cast<std::size_t>(s % 3);
        auto layer = make_layer({.kind = LayerKind::conv1d, .in = 3, .out = 4, .kernel_w = 4, .stride_w = stride});
        layer->init(rng);
        auto params = layer->params();
        for (auto& v : params[1]->value.data) v = rng.uniform(-1, 1);
        const Tensor x = random_tensor({2, 3, 15}, rng);
        Rng fr(0);
        const Tensor y = layer->forward(x, Mode::eval, fr, nullptr);
        const Tensor& w = params[0]->value;
        const Tensor& b = params[1]->value;
        const std::size_t lo = (15 - 4) / stride + 1;
        REQUIRE(y.shape == Shape{2, 4, lo});
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t o = 0; o < 4; ++o)
                for (std::size_t t = 0; t < lo; ++t) {
                    double acc = b.data[o];
                    for (std::size_t c = 0; c < 3; ++c)
                        for (std::size_t k = 0; k < 4; ++k)
                            acc += w.data[(o * 3 + c) * 4 + k] * x.data[(n * 3 + c) * 15 + t * stride + k];
                    CHECK(y.data[(n * 4 + o) * lo + t] == doctest::Approx(acc).epsilon(1e-12));
                }
    }
}

TEST_CASE("conv2d matches the direct sum") {
    Rng rng(9);
    auto layer = make_layer(conv2d(2, 3, 3, 2, 2, 1));
    layer->init(rng);
    auto params = layer->params();
    for (auto& v : params[1]->value.data) v = rng.uniform(-1, 1);
    const Tensor x = random_tensor({2, 2, 9, 5}, rng);
    Rng fr(0);
    const Tensor y = layer->forward(x, Mode::eval, fr, nullptr);
    const std::size_t ho = (9 - 3) / 2 + 1, wo = (5 - 2) / 1 + 1;
    REQUIRE(y.shape == Shape{2, 3, ho, wo});
    const Tensor& w = params[0]->value;
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t o = 0; o < 3; ++o)
            for (std::size_t i = 0; i < ho; ++i)
                for (std::size_t j = 0; j < wo; ++j) {
                    double acc = params[1]->value.data[o];
                    for (std::size_t c = 0; c < 2; ++c)
                        for (std::size_t a = 0; a < 3; ++a)
                            for (std::size_t b = 0; b < 2; ++b)
                                acc += w.data[((o * 2 + c) * 3 + a) * 2 + b] *
                                       x.data[((n * 2 + c) * 9 + i * 2 + a) * 5 + j + b];
                    CHECK(y.data[((n * 3 + o) * ho + i) * wo + j] == doctest::Approx(acc).epsilon(1e-12));
                }
}

TEST_CASE("softmax rows are distributions") {
    Rng rng(3);
    auto layer = make_layer({.kind = LayerKind::softmax});
    const Tensor x = random_tensor({5, 4}, rng, 50.0);
    Rng fr(0);
    const Tensor y = layer->forward(x, Mode::eval, fr, nullptr);
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(y.data[r * 4 + k] >= 0.0);
            s += y.data[r * 4 + k];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("dropout is inverted and inactive in eval") {
    auto layer = make_layer({.kind = LayerKind::dropout, .rate = 0.25});
    Tensor x({1, 20000});
    x.fill(1.0);
    Rng rng(4);
    const Tensor y = layer->forward(x, Mode::train, rng, nullptr);
    double mean = 0.0;
    for (double v : y.data) {
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
        mean += v;
    }
    CHECK(mean / 20000.0 == doctest::Approx(1.0).epsilon(0.03));
    Rng rng2(4);
    CHECK(layer->forward(x, Mode::eval, rng2, nullptr) == x);
    CHECK_THROWS_AS(make_layer({.kind = LayerKind::dropout, .rate = 1.0}), ConfigError);
}

TEST_CASE("batchnorm running statistics") {
    auto layer = make_layer({.kind = LayerKind::batchnorm, .in = 2});
    Tensor x({4, 2});
    x.data = {1, 10, 3, 20, 5, 30, 7, 40};
    Rng rng(0);
    const Tensor y = layer->forward(x, Mode::train, rng, nullptr);
    auto buffers = layer->buffers();
    REQUIRE(buffers.size() == 2);
    // momentum 0.9 from mean 0 / var 1; unbiased or biased variance both start from batch stats
    CHECK((*buffers[0])[0] == doctest::Approx(0.1 * 4.0));
    CHECK((*buffers[0])[1] == doctest::Approx(0.1 * 25.0));
    // train output is standardised per feature
    for (std::size_t c = 0; c < 2; ++c) {
        double m = 0.0, v = 0.0;
        for (std::size_t r = 0; r < 4; ++r) m += y.data[r * 2 + c];
        m /= 4.0;
        for (std::size_t r = 0; r < 4; ++r) v += (y.data[r * 2 + c] - m) * (y.data[r * 2 + c] - m);
        CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(v / 4.0 == doctest::Approx(1.0).epsilon(1e-3));
    }
    // eval mode leaves the statistics alone
    const Tensor before = *buffers[0];
    Rng rng2(0);
    layer->forward(x, Mode::eval, rng2, nullptr);
    CHECK(*layer->buffers()[0] == before);
}

TEST_CASE("shape rules") {
    auto dense = make_layer({.kind = LayerKind::dense, .in = 4, .out = 2});
    CHECK(dense->output_shape({4}) == Shape{2});
    CHECK_THROWS_AS(dense->output_shape({5}), DimensionError);
    auto conv = make_layer({.kind = LayerKind::conv1d, .in = 3, .out = 8, .kernel_w = 24, .stride_w = 1});
    CHECK(conv->output_shape({3, 333}) == Shape{8, 310});
    CHECK_THROWS_AS(conv->output_shape({3, 10}), DimensionError);
    CHECK_THROWS_AS(make_layer({.kind = LayerKind::dense, .in = 0, .out = 2}), ConfigError);
    LayerSpec split{.kind = LayerKind::stream_split, .streams = 2};
    split.children = {{conv2d(1, 2, 3, 1, 1, 1)}, {conv2d(1, 2, 3, 1, 1, 1)}};
    auto s = make_layer(split);
    CHECK(s->output_shape({6, 7}) == Shape{2 * (2 * 5 * 3)});
    CHECK_THROWS_AS(s->output_shape({5, 7}), DimensionError);
}

TEST_CASE("layer spec json round trip") {
    LayerSpec split{.kind = LayerKind::stream_split, .streams = 2};
    LayerSpec branches{.kind = LayerKind::branch_concat};
    branches.children = {{conv2d(2, 3, 3, 1, 1, 1), {.kind = LayerKind::relu}}, {{.kind = LayerKind::flatten}}};
    split.children = {{branches}, {{.kind = LayerKind::batchnorm, .in = 1}}};
    const std::vector<LayerSpec> specs{
        {.kind = LayerKind::dense, .in = 3, .out = 2, .l2 = true},
        {.kind = LayerKind::conv1d, .in = 3, .out = 2, .kernel_w = 5, .stride_w = 2, .l2 = true},
        {.kind = LayerKind::dropout, .rate = 0.1},
        split,
    };
    for (const auto& s : specs) {
        const nlohmann::json j = s;
        CHECK(j.get<LayerSpec>() == s);
        CHECK(make_layer(s)->spec() == s);
    }
}
