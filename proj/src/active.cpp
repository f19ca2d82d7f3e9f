#include "xsadapt/active.hpp"

#include <algorithm>
#include <numeric>

#include "xsadapt/errors.hpp"

namespace xsa {

std::vector<DistanceVector> distance_vectors(std::span<const std::size_t> candidates, std::span<const Point3> coords,
                                             const CenterSet& centers) {
    if (centers.size() < 2) throw ContractError("distance_vectors: boundary scoring needs at least two centers");
    std::vector<DistanceVector> out;
    out.reserve(candidates.size());
    const std::size_t k = centers.size();
    std::vector<std::size_t> order(k);
    for (std::size_t idx : candidates) {
        if (idx >= coords.size()) throw DimensionError("distance_vectors: candidate index out of range");
        DistanceVector dv;
        dv.index = idx;
        dv.distances.resize(k);
        for (std::size_t c = 0; c < k; ++c) dv.distances[c] = distance(coords[idx], centers.centers[c].coords);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::partial_sort(order.begin(), order.begin() + 2, order.end(), [&](std::size_t a, std::size_t b) {
            if (dv.distances[a] != dv.distances[b]) return dv.distances[a] < dv.distances[b];
            return centers.centers[a].label < centers.centers[b].label;
        });
        dv.nearest = centers.centers[order[0]].label;
        dv.second = centers.centers[order[1]].label;
        dv.d_nearest = dv.distances[order[0]];
        dv.d_second = dv.distances[order[1]];
        out.push_back(std::move(dv));
    }
    return out;
}

Informativeness informativeness(double d_nearest, double d_second) {
    if (d_second <= 0.0) return {0.0, true};
    return {(d_second - d_nearest) / d_second, false};
}

SelectionOrder selection_order_from_string(const std::string& s) {
    if (s == "lowest") return SelectionOrder::lowest;
    if (s == "highest") return SelectionOrder::highest;
    throw ConfigError("selection must be 'lowest' or 'highest', got '" + s + "'");
}

std::string to_string(SelectionOrder order) { return order == SelectionOrder::lowest ? "lowest" : "highest"; }

int OracleLedger::query(std::size_t index, const LabelSource& source) {
    if (index >= source.size()) {
        throw LookupError("oracle: index " + std::to_string(index) + " outside the target training set");
    }
    if (const auto it = labels_.find(index); it != labels_.end()) return it->second;
    const int label = source.label(index);
    labels_.emplace(index, label);
    return label;
}

std::vector<std::size_t> OracleLedger::indices() const {
    std::vector<std::size_t> out;
    out.reserve(labels_.size());
    for (const auto& [i, l] : labels_) out.push_back(i);
    return out;
}

nlohmann::json OracleLedger::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [i, l] : labels_) entries.push_back({i, l});
    return nlohmann::json{{"count", labels_.size()}, {"entries", entries}};
}

CoreSet select_core_set(std::span<const DistanceVector> dvs, std::size_t per_boundary, OracleLedger& ledger,
                        const LabelSource& source, SelectionOrder order) {
    if (per_boundary == 0) throw ConfigError("select_core_set: per-boundary budget must be at least 1");
    struct Scored {
        std::size_t index;
        double score;
    };
    CoreSet core;
    std::map<BoundaryPair, std::vector<Scored>> categories;
    for (const auto& dv : dvs) {
        if (ledger.contains(dv.index)) continue;
        const auto inf = informativeness(dv);
        core.degenerate += inf.degenerate;
        const BoundaryPair key{std::min(dv.nearest, dv.second), std::max(dv.nearest, dv.second)};
        categories[key].push_back({dv.index, inf.value});
    }
    core.categories = categories.size();
    OracleLedger staged = ledger;
    for (auto& [pair, members] : categories) {
        std::sort(members.begin(), members.end(), [&](const Scored& a, const Scored& b) {
            if (a.score != b.score) return order == SelectionOrder::lowest ? a.score < b.score : a.score > b.score;
            return a.index < b.index;
        });
        const std::size_t take = std::min(per_boundary, members.size());
        for (std::size_t i = 0; i < take; ++i) {
            const int label = staged.query(members[i].index, source);
            core.samples.push_back(QueriedSample{members[i].index, label, members[i].score, pair});
        }
    }
    ledger = std::move(staged);
    return core;
}

std::size_t query_budget(std::size_t per_boundary, std::size_t classes) {
    return per_boundary * classes * (classes > 0 ? classes - 1 : 0) / 2;
}

}  // namespace xsa
