#include "xsadapt/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xsadapt/errors.hpp"

namespace xsa {

double similarity(double d_candidate, double d_core, double ts_core_s, double ts_candidate_s, double thres_t_s) {
    if (d_core <= 0.0) return std::numeric_limits<double>::infinity();
    return d_candidate / d_core + std::abs(ts_core_s - ts_candidate_s) / thres_t_s;
}

double similarity(const Point3& core, const Point3& candidate, const Point3& center, double ts_core_s,
                  double ts_candidate_s, double thres_t_s) {
    return similarity(distance(candidate, center), distance(core, center), ts_core_s, ts_candidate_s, thres_t_s);
}

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::pseudo: return "pseudo";
        case Provenance::queried: return "queried";
        case Provenance::propagated: return "propagated";
    }
    return "unknown";
}

nlohmann::json AugmentedSet::histogram(std::size_t bins) const {
    std::vector<std::size_t> counts(bins, 0);
    for (const auto& m : members) {
        if (m.provenance != Provenance::propagated) continue;
        auto b = static_cast<std::size_t>(std::floor(m.score / cutoff * static_cast<double>(bins)));
        counts[std::min(b, bins - 1)]++;
    }
    return nlohmann::json{{"range", {0.0, cutoff}}, {"counts", counts}};
}

AugmentedSet augment_core_set(std::span<const CoreSample> core, std::span<const std::size_t> candidates,
                              const CenterSet& centers, std::span<const Point3> coords,
                              std::span<const double> timestamps_ms, const AugmentConfig& cfg) {
    if (!(cfg.thres_t_s > 0.0)) throw ConfigError("augment: temporal threshold must be positive");
    if (coords.size() != timestamps_ms.size()) throw DimensionError("augment: coords and timestamps differ");
    AugmentedSet out;
    out.cutoff = cfg.cutoff;
    out.propagated_per_core.assign(core.size(), 0);
    for (const auto& q : core) {
        if (q.index >= coords.size()) throw DimensionError("augment: core index out of range");
        out.members.push_back(AugmentedMember{q.index, q.label, Provenance::queried, q.index, 0.0});
    }
    if (core.empty() || centers.empty()) return out;

    // Candidates sorted by time so each core sample scans only its temporal window.
    std::vector<std::size_t> by_time(candidates.begin(), candidates.end());
    for (std::size_t j : by_time)
        if (j >= coords.size()) throw DimensionError("augment: candidate index out of range");
    std::sort(by_time.begin(), by_time.end(), [&](std::size_t a, std::size_t b) {
        if (timestamps_ms[a] != timestamps_ms[b]) return timestamps_ms[a] < timestamps_ms[b];
        return a < b;
    });

    struct Best {
        double score = std::numeric_limits<double>::infinity();
        std::size_t core = 0;  // position in `core`
        bool set = false;
    };
    std::vector<Best> best(coords.size());
    std::vector<bool> is_core(coords.size(), false);
    for (const auto& q : core) is_core[q.index] = true;
    const double horizon_ms = cfg.cutoff * cfg.thres_t_s * 1000.0;

    for (std::size_t qi = 0; qi < core.size(); ++qi) {
        const CoreSample& q = core[qi];
        const ClassCenter* anchor = centers.find(q.label);
        if (!anchor) {
            ++out.anchor_fallbacks;
            anchor = &centers.centers.front();
            double bd = distance(coords[q.index], anchor->coords);
            for (const auto& c : centers.centers) {
                const double d = distance(coords[q.index], c.coords);
                if (d < bd) {
                    bd = d;
                    anchor = &c;
                }
            }
        }
        const double d_core = distance(coords[q.index], anchor->coords);
        if (d_core <= 0.0) {
            ++out.disabled_cores;
            continue;
        }
        const double tq = timestamps_ms[q.index];
        auto lo = std::lower_bound(by_time.begin(), by_time.end(), tq - horizon_ms,
                                   [&](std::size_t j, double t) { return timestamps_ms[j] < t; });
        for (auto it = lo; it != by_time.end() && timestamps_ms[*it] <= tq + horizon_ms; ++it) {
            const std::size_t j = *it;
            if (is_core[j]) continue;
            const double f = similarity(distance(coords[j], anchor->coords), d_core, tq / 1000.0,
                                        timestamps_ms[j] / 1000.0, cfg.thres_t_s);
            if (!(f <= cfg.cutoff)) continue;
            Best& b = best[j];
            if (!b.set || f < b.score || (f == b.score && q.index < core[b.core].index)) b = Best{f, qi, true};
        }
    }
    std::vector<std::size_t> hit;
    for (std::size_t j : candidates)
        if (best[j].set) hit.push_back(j);
    std::sort(hit.begin(), hit.end());
    hit.erase(std::unique(hit.begin(), hit.end()), hit.end());
    for (std::size_t j : hit) {
        const Best& b = best[j];
        out.members.push_back(
            AugmentedMember{j, core[b.core].label, Provenance::propagated, core[b.core].index, b.score});
        ++out.propagated_per_core[b.core];
        ++out.propagated;
    }
    return out;
}

}  // namespace xsa
