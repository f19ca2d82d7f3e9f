#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"

#include "xsadapt/classifier.hpp"
#include "xsadapt/errors.hpp"

using namespace xsa;

namespace {

ArchitectureConfig arch(Architecture name, std::size_t c, std::size_t l, std::size_t k) {
    ArchitectureConfig a;
    a.name = name;
    a.channels = c;
    a.length = l;
    a.classes = k;
    return a;
}

/// Random windows with the given shape; labels cycle through K.
std::vector<Window> random_windows(std::size_t n, std::size_t c, std::size_t l, int k, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Window> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].subject_id = "X";
        out[i].start = i;
        out[i].timestamp_ms = 10.0 * static_cast<double>(i);
        out[i].channels = c;
        out[i].length = l;
        out[i].label = static_cast<int>(i % static_cast<std::size_t>(k));
        out[i].values.resize(c * l);
        for (auto& v : out[i].values) v = rng.uniform(-1, 1);
    }
    return out;
}

std::vector<std::uint64_t> param_hashes(const Model& m) {
    std::vector<std::uint64_t> out;
    for (const auto* p : m.net.params()) out.push_back(hash_tensor(p->value));
    return out;
}

}  // namespace

TEST_CASE("mlp parameter count example") {
    ArchitectureConfig a = arch(Architecture::mlp, 2, 4, 2);
    a.hidden = {4};
    CHECK(expected_parameter_count(a) == 46);
    CHECK(build(a, 1).net.parameter_count() == 46);
}

TEST_CASE("closed-form parameter counts match built networks") {
    const std::vector<ArchitectureConfig> configs{
        arch(Architecture::mlp, 3, 30, 6),
        arch(Architecture::tpn, 9, 333, 12),
        arch(Architecture::double_stream, 18, 30, 12),
        arch(Architecture::double_stream, 30, 30, 5),
    };
    for (const auto& a : configs) {
        const Model m = build(a, 3);
        CAPTURE(to_string(a.name));
        CHECK(m.net.parameter_count() == expected_parameter_count(a));
    }
}

TEST_CASE("shape rules at build time") {
    CHECK_NOTHROW(build(arch(Architecture::tpn, 9, 333, 4), 0));
    CHECK_THROWS_AS(build(arch(Architecture::tpn, 9, 10, 4), 0), ConfigError);
    CHECK_NOTHROW(build(arch(Architecture::double_stream, 18, 30, 4), 0));
    CHECK_THROWS_AS(build(arch(Architecture::double_stream, 6, 30, 4), 0), ConfigError);
    CHECK_THROWS_AS(build(arch(Architecture::double_stream, 19, 30, 4), 0), ConfigError);
    CHECK_THROWS_AS(build(arch(Architecture::mlp, 3, 30, 1), 0), ConfigError);
    CHECK_THROWS_AS(architecture_from_string("resnet"), ConfigError);
}

TEST_CASE("features are the 32-unit penultimate layer") {
    for (const auto& a : {arch(Architecture::tpn, 3, 60, 4), arch(Architecture::double_stream, 18, 30, 4),
                          arch(Architecture::mlp, 3, 30, 4)}) {
        const Model m = build(a, 5);
        const auto w = random_windows(3, a.channels, a.length, 4, 1);
        const auto preds = predict(m, w);
        REQUIRE(preds.size() == 3);
        for (const auto& p : preds) {
            CHECK(p.features.size() == 32);
            CHECK(p.probabilities.size() == 4);
            const auto it = std::max_element(p.probabilities.begin(), p.probabilities.end());
            CHECK(p.confidence == *it);
            CHECK(p.label == static_cast<int>(it - p.probabilities.begin()));
            double s = 0.0;
            for (double v : p.probabilities) s += v;
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("predict is deterministic and batch-size independent") {
    const Model m = build(arch(Architecture::double_stream, 18, 30, 3), 2);
    const auto w = random_windows(7, 18, 30, 3, 2);
    const auto a = predict(m, w, 512);
    const auto b = predict(m, w, 3);
    for (std::size_t i = 0; i < w.size(); ++i) {
        CHECK(a[i].probabilities == b[i].probabilities);
        CHECK(a[i].features == b[i].features);
    }
}

TEST_CASE("untrained symmetric model predicts 1/K") {
    Model m = build(arch(Architecture::mlp, 2, 5, 4), 1);
    for (auto* p : m.net.params()) p->value.fill(0.0);
    for (const auto& p : predict(m, random_windows(5, 2, 5, 4, 3))) {
        for (double v : p.probabilities) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
        CHECK(p.confidence == doctest::Approx(0.25));
    }
}

TEST_CASE("zero epochs leave the model untouched") {
    const auto w = random_windows(20, 2, 5, 2, 4);
    Model m = build(arch(Architecture::mlp, 2, 5, 2), 8);
    const auto h = m.net.hash();
    pretrain(m, w, TrainConfig{.epochs = 0});
    CHECK(m.net.hash() == h);
    const std::vector<TrainingSample> pool{{0, 0}, {1, 1}};
    const Model teacher = m;
    fine_tune(m, w, pool, TrainConfig{.epochs = 0});
    CHECK(m.net.hash() == teacher.net.hash());
}

TEST_CASE("separable two-class data trains to 99%") {
    auto w = random_windows(200, 2, 5, 2, 6);
    for (auto& x : w)
        for (auto& v : x.values) v = 0.3 * v + (x.label == 0 ? 1.0 : -1.0);
    Model m = build(arch(Architecture::mlp, 2, 5, 2), 9);
    const auto res = pretrain(m, w, TrainConfig{.epochs = 30, .batch_size = 32, .lr = 1e-3, .seed = 1});
    CHECK(res.loss_curve.size() == 30);
    CHECK(res.loss_curve.back() < res.loss_curve.front());
    CHECK(accuracy(predict(m, w), w) >= 99.0);
}

TEST_CASE("absent classes produce warnings") {
    auto w = random_windows(10, 2, 5, 2, 1);
    Model m = build(arch(Architecture::mlp, 2, 5, 3), 1);
    const auto res = pretrain(m, w, TrainConfig{.epochs = 1});
    REQUIRE(res.warnings.size() == 1);
    CHECK(res.warnings[0].find("class 2") != std::string::npos);
    const std::vector<TrainingSample> pool{{0, 0}};
    CHECK(fine_tune(m, w, pool, TrainConfig{.epochs = 1}).warnings.size() == 2);
    CHECK_THROWS_AS(fine_tune(m, w, std::vector<TrainingSample>{}, TrainConfig{.epochs = 1}), DataError);
}

TEST_CASE("fine-tuning freezes the feature stack on every architecture") {
    for (const auto& a : {arch(Architecture::tpn, 3, 50, 3), arch(Architecture::double_stream, 18, 30, 3),
                          arch(Architecture::mlp, 3, 30, 3)}) {
        CAPTURE(to_string(a.name));
        const auto w = random_windows(24, a.channels, a.length, 3, 10);
        Model m = build(a, 4);
        pretrain(m, w, TrainConfig{.epochs = 1, .batch_size = 8, .seed = 2});
        const auto frozen_hash = m.net.feature_stack_hash();
        const auto before = param_hashes(m);
        const std::size_t first = m.net.param_index(m.net.frozen_prefix());
        const std::vector<AdamSlot> frozen_slots(m.adam.slots.begin(),
                                                 m.adam.slots.begin() + static_cast<std::ptrdiff_t>(first));
        std::vector<TrainingSample> pool;
        for (std::size_t i = 0; i < w.size(); i += 2) pool.push_back({i, w[i].label});
        fine_tune(m, w, pool, TrainConfig{.epochs = 3, .batch_size = 4, .lr = 1e-2, .seed = 3});
        CHECK(m.net.feature_stack_hash() == frozen_hash);
        const auto after = param_hashes(m);
        REQUIRE(first > 0);
        for (std::size_t i = 0; i < first; ++i) CHECK(after[i] == before[i]);
        bool head_changed = false;
        for (std::size_t i = first; i < after.size(); ++i) head_changed |= after[i] != before[i];
        CHECK(head_changed);
        for (std::size_t i = 0; i < first; ++i) CHECK(m.adam.slots[i] == frozen_slots[i]);
    }
}

TEST_CASE("fine-tuning on target labels helps on shifted data") {
    SynthConfig sc;
    sc.classes = 3;
    sc.subjects = 3;
    sc.shift = 1.5;
    sc.per_class_seconds = 10.0;
    const auto windows = window_all(synth_generate(sc), 300.0, 30.0);
    const auto split = loso_split(windows, SplitSpec{"S01", 3.0 / 7.0, 1});
    Model m = build(arch(Architecture::mlp, 3, 30, 3), 1);
    pretrain(m, split.pretrain, TrainConfig{.epochs = 10, .seed = 1});
    const double before = accuracy(predict(m, split.target_test), split.target_test);
    std::vector<TrainingSample> pool;
    for (std::size_t i = 0; i < split.target_train.size(); ++i) pool.push_back({i, split.target_train[i].label});
    fine_tune(m, split.target_train, pool, TrainConfig{.epochs = 10, .seed = 2});
    const double after = accuracy(predict(m, split.target_test), split.target_test);
    MESSAGE("source-only " << before << "%, fine-tuned " << after << "%");
    CHECK(after > before);
}

TEST_CASE("training is equivariant under class relabelling") {
    // Relabel classes by pi and permute the output rows to match; the trained
    // models must then agree up to the same permutation.
    const std::vector<int> pi{1, 2, 0};
    const auto w = random_windows(60, 2, 5, 3, 12);
    std::vector<Window> wp = w;
    for (auto& x : wp) x.label = pi[static_cast<std::size_t>(x.label)];
    Model a = build(arch(Architecture::mlp, 2, 5, 3), 3);
    Model b = a;
    auto pa = a.net.params();
    auto pb = b.net.params();
    const Tensor& wa = pa[pa.size() - 2]->value;
    Tensor& wb = pb[pb.size() - 2]->value;
    const std::size_t width = wa.dim(1);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto dst = static_cast<std::size_t>(pi[k]);
        std::copy_n(wa.data.begin() + static_cast<std::ptrdiff_t>(k * width), width,
                    wb.data.begin() + static_cast<std::ptrdiff_t>(dst * width));
        pb.back()->value.data[dst] = pa.back()->value.data[k];
    }
    const TrainConfig cfg{.epochs = 15, .batch_size = 16, .lr = 1e-2, .seed = 4};
    pretrain(a, w, cfg);
    pretrain(b, wp, cfg);
    const auto ra = predict(a, w), rb = predict(b, w);
    double worst = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        for (std::size_t k = 0; k < 3; ++k)
            worst = std::max(worst, std::abs(ra[i].probabilities[k] - rb[i].probabilities[static_cast<std::size_t>(pi[k])]));
    CHECK(worst < 1e-6);
}

TEST_CASE("checkpoint round trip") {
    const auto dir = testutil::scratch_dir("ckpt");
    for (const auto& a : {arch(Architecture::double_stream, 18, 30, 3), arch(Architecture::mlp, 3, 30, 3),
                          arch(Architecture::tpn, 3, 50, 3)}) {
        const auto w = random_windows(12, a.channels, a.length, 3, 1);
        Model m = build(a, 6);
        pretrain(m, w, TrainConfig{.epochs = 1, .batch_size = 4, .seed = 1});
        save_checkpoint(m, dir / "m.json");
        const Model back = load_checkpoint(dir / "m.json");
        CHECK(back.arch == m.arch);
        CHECK(back.seed == m.seed);
        CHECK(back.net.hash() == m.net.hash());
        CHECK(back.adam == m.adam);
        const auto p1 = predict(m, w), p2 = predict(back, w);
        for (std::size_t i = 0; i < w.size(); ++i) CHECK(p1[i].probabilities == p2[i].probabilities);
    }
    {
        std::ofstream(dir / "bad.json") << R"({"format": "something-else", "version": 1})";
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), DataError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), IoError);
}
