#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"

#include "xsadapt/augment.hpp"
#include "xsadapt/errors.hpp"

using namespace xsa;

namespace {

CenterSet two_centers() {
    CenterSet c;
    c.centers.push_back(ClassCenter{0, 0, {0, 0, 0}});
    c.centers.push_back(ClassCenter{1, 1, {10, 0, 0}});
    return c;
}

double dist(const Point3& a, const Point3& b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

}  // namespace

TEST_CASE("similarity substitutions") {
    CHECK(similarity(2.0, 2.0, 3.0, 3.0, 5.0) == 1.0);
    CHECK(similarity(0.5, 1.0, 0.0, 2.5, 5.0) == doctest::Approx(1.0));
    CHECK(similarity(1.0, 1.0, 0.0, 5.0, 5.0) == doctest::Approx(2.0));
    CHECK(std::isinf(similarity(1.0, 0.0, 0.0, 0.0, 5.0)));
    const Point3 q{1, 0, 0}, c{0, 0, 0};
    CHECK(similarity(q, q, c, 7.0, 7.0, 5.0) == 1.0);
}

TEST_CASE("similarity matches the closed form over random cases") {
    Rng rng(12);
    for (int i = 0; i < 1000; ++i) {
        const double dj = rng.uniform(0.0, 5.0), dq = rng.uniform(0.01, 5.0);
        const double tq = rng.uniform(0.0, 100.0), tj = rng.uniform(0.0, 100.0), th = rng.uniform(0.5, 10.0);
        CHECK(std::abs(similarity(dj, dq, tq, tj, th) - (dj / dq + std::abs(tq - tj) / th)) < 1e-9);
    }
}

TEST_CASE("no candidate in the temporal window leaves only the core") {
    const std::vector<Point3> coords{{1, 0, 0}, {1, 0, 0}, {1, 0, 0}};
    const std::vector<double> ts{0.0, 60000.0, 120000.0};
    const std::vector<CoreSample> core{{0, 0}};
    const std::vector<std::size_t> cand{1, 2};
    const auto a = augment_core_set(core, cand, two_centers(), coords, ts);
    CHECK(a.size() == 1);
    CHECK(a.members[0].provenance == Provenance::queried);
    CHECK(a.propagated == 0);
}

TEST_CASE("conflicts take the smaller similarity") {
    // Candidate 2 is 3 from the center. Core at index 0 is 5 away with no time gap (f = 0.6);
    // core at index 1 is 5 away with a 1.5 s gap (f = 0.9).
    const std::vector<Point3> coords{{5, 0, 0}, {0, 5, 0}, {3, 0, 0}};
    const std::vector<double> ts{1000.0, 2500.0, 1000.0};
    CenterSet c;
    c.centers.push_back(ClassCenter{0, 9, {0, 0, 0}});
    const std::vector<CoreSample> labelled{{1, 2}, {0, 0}};
    const std::vector<std::size_t> cand{2};
    const auto a = augment_core_set(labelled, cand, c, coords, ts);
    REQUIRE(a.propagated == 1);
    const auto& m = a.members.back();
    CHECK(m.source == 0);
    CHECK(m.label == 0);
    CHECK(m.score == doctest::Approx(0.6));
    CHECK(a.propagated_per_core == std::vector<std::size_t>{0, 1});
}

TEST_CASE("propagated labels come from the oracle label of the winning core") {
    CenterSet c = two_centers();
    const std::vector<Point3> coords{{2, 0, 0}, {8, 0, 0}, {1.5, 0, 0}, {9, 0, 0}};
    const std::vector<double> ts{0, 0, 100, 100};
    const std::vector<CoreSample> core{{0, 0}, {1, 1}};
    const std::vector<std::size_t> cand{2, 3};
    const auto a = augment_core_set(core, cand, c, coords, ts);
    REQUIRE(a.size() == 4);
    CHECK(a.members[2].index == 2);
    CHECK(a.members[2].label == 0);
    CHECK(a.members[3].index == 3);
    CHECK(a.members[3].label == 1);
}

TEST_CASE("membership agrees with an exhaustive grid oracle") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        const std::size_t n = 120;
        std::vector<Point3> coords(n);
        std::vector<double> ts(n);
        for (std::size_t i = 0; i < n; ++i) {
            coords[i] = {rng.normal() * 2, rng.normal() * 2, rng.normal() * 2};
            ts[i] = 30.0 * static_cast<double>(i) + rng.uniform(0.0, 10.0);
        }
        CenterSet centers;
        for (int k = 0; k < 3; ++k)
            centers.centers.push_back(ClassCenter{k, 0, {rng.normal() * 3, rng.normal() * 3, rng.normal() * 3}});
        std::vector<CoreSample> core;
        std::vector<std::size_t> cand;
        std::vector<bool> is_core(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.uniform() < 0.1) {
                core.push_back({i, static_cast<int>(rng.below(3))});
                is_core[i] = true;
            } else if (rng.uniform() < 0.8) {
                cand.push_back(i);
            }
        }
        if (core.empty()) continue;
        AugmentConfig cfg;
        cfg.thres_t_s = 0.5;
        const auto a = augment_core_set(core, cand, centers, coords, ts, cfg);

        std::vector<int> want_label(n, -1);
        std::vector<double> want_score(n, std::numeric_limits<double>::infinity());
        for (std::size_t j : cand) {
            for (std::size_t q = 0; q < core.size(); ++q) {
                const Point3& anchor = centers.find(core[q].label)->coords;
                const double dq = dist(coords[core[q].index], anchor);
                const double f = dist(coords[j], anchor) / dq + std::abs(ts[core[q].index] - ts[j]) / 1000.0 / 0.5;
                if (f <= 1.0 && f < want_score[j]) {
                    want_score[j] = f;
                    want_label[j] = core[q].label;
                }
            }
        }
        std::vector<int> got(n, -1);
        for (const auto& m : a.members) {
            if (m.provenance != Provenance::propagated) continue;
            got[m.index] = m.label;
            CHECK(m.score <= 1.0);
            CHECK(std::abs(m.score - want_score[m.index]) < 1e-9);
            CHECK_FALSE(is_core[m.index]);
        }
        CHECK(got == want_label);
        CHECK(a.propagated == std::accumulate(a.propagated_per_core.begin(), a.propagated_per_core.end(), std::size_t{0}));
    }
}

TEST_CASE("missing anchor falls back to the nearest center") {
    CenterSet c = two_centers();
    const std::vector<Point3> coords{{9, 0, 0}, {9.5, 0, 0}};
    const std::vector<double> ts{0, 0};
    const std::vector<CoreSample> core{{0, 7}};
    const std::vector<std::size_t> cand{1};
    const auto a = augment_core_set(core, cand, c, coords, ts);
    CHECK(a.anchor_fallbacks == 1);
    REQUIRE(a.propagated == 1);
    CHECK(a.members[1].label == 7);
    CHECK(a.members[1].score == doctest::Approx(0.5));
}

TEST_CASE("a core sample on its center is disabled") {
    CenterSet c = two_centers();
    const std::vector<Point3> coords{{0, 0, 0}, {0, 0, 0}};
    const std::vector<double> ts{0, 0};
    const std::vector<CoreSample> core{{0, 0}};
    const std::vector<std::size_t> cand{1};
    const auto a = augment_core_set(core, cand, c, coords, ts);
    CHECK(a.disabled_cores == 1);
    CHECK(a.propagated == 0);
    CHECK(a.size() == 1);
}

TEST_CASE("augment guards and histogram") {
    CenterSet c = two_centers();
    const std::vector<Point3> coords{{1, 0, 0}, {0.5, 0, 0}, {0.2, 0, 0}};
    const std::vector<double> ts{0, 0, 0};
    const std::vector<double> short_ts{0};
    const std::vector<CoreSample> core{{0, 0}};
    const std::vector<std::size_t> cand{1, 2};
    AugmentConfig bad;
    bad.thres_t_s = 0.0;
    CHECK_THROWS_AS(augment_core_set(core, cand, c, coords, ts, bad), ConfigError);
    CHECK_THROWS_AS(augment_core_set(core, cand, c, coords, short_ts), DimensionError);
    const auto a = augment_core_set(core, cand, c, coords, ts);
    const auto h = a.histogram(10);
    CHECK(h["counts"][2] == 1);
    CHECK(h["counts"][5] == 1);
    CHECK(to_string(Provenance::propagated) == "propagated");
}
