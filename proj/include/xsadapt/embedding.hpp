#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"

namespace xsa {

using Point3 = std::array<double, 3>;

double distance(const Point3& a, const Point3& b);

/// Mean-centred projection onto the top-3 principal axes.
struct PcaModel {
    std::vector<double> mean;
    std::array<std::vector<double>, 3> components;  // unit-norm, pairwise orthogonal
    std::array<double, 3> explained{};              // variance fractions, non-increasing
    std::size_t rank = 0;                           // numerical rank of the covariance
    bool padded = false;                            // rank < 3: trailing axes are an arbitrary completion

    std::size_t dim() const { return mean.size(); }
};

/// Rows of `features` are samples (row-major N x D). Components are the
/// eigenvectors of the covariance sorted by decreasing eigenvalue; each is
/// signed so its largest-magnitude coordinate is positive.
PcaModel pca_fit(std::span<const double> features, std::size_t rows, std::size_t dim);
PcaModel pca_fit(const std::vector<std::vector<double>>& features);

Point3 pca_transform(const PcaModel& model, std::span<const double> feature);
std::vector<Point3> pca_transform(const PcaModel& model, const std::vector<std::vector<double>>& features);

nlohmann::json to_json(const PcaModel& model);

}  // namespace xsa
