#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"

#include "xsadapt/embedding.hpp"
#include "xsadapt/selftrain.hpp"

namespace xsa {

struct DistanceVector {
    std::size_t index = 0;
    std::vector<double> distances;  // aligned with CenterSet::centers
    int nearest = -1;               // class ids
    int second = -1;
    double d_nearest = 0.0;
    double d_second = 0.0;
};

/// Unordered class pair {a, b} stored with a < b.
using BoundaryPair = std::pair<int, int>;

/// Distances from each candidate to every center; nearest and second
/// nearest by distance with ties going to the lower class id. Throws
/// ContractError when fewer than two centers exist.
std::vector<DistanceVector> distance_vectors(std::span<const std::size_t> candidates, std::span<const Point3> coords,
                                             const CenterSet& centers);

struct Informativeness {
    double value = 0.0;
    bool degenerate = false;  // second-nearest distance was zero
};

/// (d_second - d_nearest) / d_second. Near 0: the sample sits on a class
/// boundary; near 1: it sits on a center.
Informativeness informativeness(double d_nearest, double d_second);
inline Informativeness informativeness(const DistanceVector& dv) {
    return informativeness(dv.d_nearest, dv.d_second);
}

enum class SelectionOrder { lowest, highest };

SelectionOrder selection_order_from_string(const std::string& s);
std::string to_string(SelectionOrder order);

/// Ground truth behind the oracle.
class LabelSource {
public:
    virtual ~LabelSource() = default;
    virtual std::size_t size() const = 0;
    virtual int label(std::size_t index) const = 0;
};

class VectorLabelSource final : public LabelSource {
public:
    explicit VectorLabelSource(std::vector<int> labels) : labels_(std::move(labels)) {}
    std::size_t size() const override { return labels_.size(); }
    int label(std::size_t index) const override { return labels_.at(index); }

private:
    std::vector<int> labels_;
};

/// Every label ever obtained from the oracle. Labels are immutable once
/// recorded and re-queries are free.
class OracleLedger {
public:
    /// Returns the true label; records it on first query only. Throws
    /// LookupError for indices outside the source.
    int query(std::size_t index, const LabelSource& source);

    bool contains(std::size_t index) const { return labels_.contains(index); }
    std::size_t count() const { return labels_.size(); }
    const std::map<std::size_t, int>& entries() const { return labels_; }
    std::vector<std::size_t> indices() const;

    nlohmann::json to_json() const;
    bool operator==(const OracleLedger&) const = default;

private:
    std::map<std::size_t, int> labels_;
};

struct QueriedSample {
    std::size_t index = 0;
    int label = 0;  // from the oracle
    double score = 0.0;
    BoundaryPair boundary{};
};

struct CoreSet {
    std::vector<QueriedSample> samples;  // newly queried this call, category order then rank
    std::size_t categories = 0;          // non-empty boundary categories
    std::size_t degenerate = 0;          // candidates with d_second == 0

    std::size_t size() const { return samples.size(); }
};

/// Groups candidates by boundary pair and queries the `per_boundary` most
/// informative (ties by lower index) of each. Candidates already in the
/// ledger are skipped. Oracle failures leave the ledger unchanged.
CoreSet select_core_set(std::span<const DistanceVector> dvs, std::size_t per_boundary, OracleLedger& ledger,
                        const LabelSource& source, SelectionOrder order = SelectionOrder::lowest);

/// Upper bound N * K(K-1)/2 on new queries per iteration.
std::size_t query_budget(std::size_t per_boundary, std::size_t classes);

}  // namespace xsa
