#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xsadapt/classifier.hpp"
#include "xsadapt/embedding.hpp"

namespace xsa {

inline constexpr double kThresholdStep = 0.05;
inline constexpr double kThresholdCap = 0.95;

/// base + 0.05 * (iteration - 1), capped at 0.95. Iterations are 1-based.
double threshold_for_iter(double base, int iteration);

struct SelfTrainingSet {
    std::vector<std::size_t> members;  // ascending indices into the target training windows
    std::vector<int> pseudo_labels;    // argmax class per member
    std::vector<double> confidences;
    double threshold = 0.0;
    int iteration = 1;

    std::size_t size() const { return members.size(); }
    bool empty() const { return members.empty(); }
};

struct ClassCenter {
    int label = 0;
    std::size_t index = 0;  // member window chosen as the center
    Point3 coords{};
};

/// One center per class present in S, ordered by class id.
struct CenterSet {
    std::vector<ClassCenter> centers;

    std::size_t size() const { return centers.size(); }
    bool empty() const { return centers.empty(); }
    const ClassCenter* find(int label) const;
};

/// Members are the samples whose confidence is strictly greater than the
/// iteration threshold. `excluded` indices (already oracle-labelled) never
/// join S.
SelfTrainingSet build_self_training_set(std::span<const Prediction> predictions, int iteration, double base_threshold,
                                        std::span<const std::size_t> excluded = {});

/// For each class, the member nearest (Euclidean, 3-D) to the class
/// centroid; ties go to the lower index.
CenterSet build_center_set(std::span<const std::size_t> members, std::span<const int> labels,
                           std::span<const Point3> coords);
CenterSet build_center_set(const SelfTrainingSet& s, std::span<const Point3> coords);

}  // namespace xsa
