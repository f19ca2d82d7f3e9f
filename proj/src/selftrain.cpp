#include "xsadapt/selftrain.hpp"

#include <algorithm>
#include <map>

#include "xsadapt/errors.hpp"

namespace xsa {

double threshold_for_iter(double base, int iteration) {
    if (iteration < 1) throw ConfigError("threshold_for_iter: iterations are 1-based");
    return std::min(kThresholdCap, base + kThresholdStep * static_cast<double>(iteration - 1));
}

const ClassCenter* CenterSet::find(int label) const {
    for (const auto& c : centers)
        if (c.label == label) return &c;
    return nullptr;
}

SelfTrainingSet build_self_training_set(std::span<const Prediction> predictions, int iteration, double base_threshold,
                                        std::span<const std::size_t> excluded) {
    SelfTrainingSet s;
    s.iteration = iteration;
    s.threshold = threshold_for_iter(base_threshold, iteration);
    std::vector<bool> skip(predictions.size(), false);
    for (std::size_t i : excluded)
        if (i < skip.size()) skip[i] = true;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (skip[i]) continue;
        if (predictions[i].confidence > s.threshold) {
            s.members.push_back(i);
            s.pseudo_labels.push_back(predictions[i].label);
            s.confidences.push_back(predictions[i].confidence);
        }
    }
    return s;
}

CenterSet build_center_set(std::span<const std::size_t> members, std::span<const int> labels,
                           std::span<const Point3> coords) {
    if (members.size() != labels.size()) throw DimensionError("build_center_set: members and labels differ");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t m = 0; m < members.size(); ++m) {
        if (members[m] >= coords.size()) throw DimensionError("build_center_set: member index out of range");
        by_class[labels[m]].push_back(members[m]);
    }
    CenterSet out;
    for (auto& [label, idx] : by_class) {
        std::sort(idx.begin(), idx.end());
        Point3 centroid{};
        for (std::size_t i : idx)
            for (int a = 0; a < 3; ++a) centroid[a] += coords[i][a];
        for (auto& v : centroid) v /= static_cast<double>(idx.size());
        std::size_t best = idx.front();
        double best_d = distance(coords[best], centroid);
        for (std::size_t i : idx) {
            const double d = distance(coords[i], centroid);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        out.centers.push_back(ClassCenter{label, best, coords[best]});
    }
    return out;
}

CenterSet build_center_set(const SelfTrainingSet& s, std::span<const Point3> coords) {
    return build_center_set(s.members, s.pseudo_labels, coords);
}

}  // namespace xsa
