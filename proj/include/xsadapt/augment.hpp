#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "xsadapt/embedding.hpp"
#include "xsadapt/selftrain.hpp"

namespace xsa {

inline constexpr double kDefaultTemporalThresholdS = 5.0;
inline constexpr double kDefaultSimilarityCutoff = 1.0;

/// d_candidate / d_core + |ts_core - ts_candidate| / thres_t, all times in
/// seconds. Returns +inf when d_core is zero.
double similarity(double d_candidate, double d_core, double ts_core_s, double ts_candidate_s, double thres_t_s);
double similarity(const Point3& core, const Point3& candidate, const Point3& center, double ts_core_s,
                  double ts_candidate_s, double thres_t_s);

enum class Provenance { pseudo, queried, propagated };
std::string to_string(Provenance p);

struct AugmentedMember {
    std::size_t index = 0;
    int label = 0;
    Provenance provenance = Provenance::queried;
    std::size_t source = 0;  // core sample index the label came from (self for queried)
    double score = 0.0;      // f_S for propagated members
};

/// A labelled core sample (oracle label).
struct CoreSample {
    std::size_t index = 0;
    int label = 0;
};

struct AugmentedSet {
    std::vector<AugmentedMember> members;  // core samples first, then propagated by index
    std::vector<std::size_t> propagated_per_core;  // aligned with the core samples passed in
    std::size_t anchor_fallbacks = 0;    // core label had no center; nearest center used
    std::size_t disabled_cores = 0;      // d(core, center) == 0
    std::size_t propagated = 0;

    std::size_t size() const { return members.size(); }
    nlohmann::json histogram(std::size_t bins = 10) const;  // f_S of propagated members over [0, cutoff]
    double cutoff = kDefaultSimilarityCutoff;
};

struct AugmentConfig {
    double thres_t_s = kDefaultTemporalThresholdS;
    double cutoff = kDefaultSimilarityCutoff;
};

/// Propagates each core sample's oracle label to every candidate with
/// f_S <= cutoff. Candidates matched by several core samples take the label
/// of the smallest f_S (ties by lower core index).
AugmentedSet augment_core_set(std::span<const CoreSample> core, std::span<const std::size_t> candidates,
                              const CenterSet& centers, std::span<const Point3> coords,
                              std::span<const double> timestamps_ms, const AugmentConfig& config = {});

}  // namespace xsa
