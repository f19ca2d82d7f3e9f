#include "xsadapt/embedding.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "xsadapt/errors.hpp"
#include "xsadapt/log.hpp"

namespace xsa {

double distance(const Point3& a, const Point3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

namespace {

void canonical_sign(Eigen::Ref<Eigen::VectorXd> v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best])) best = i;
    if (v[best] < 0.0) v = -v;
}

}  // namespace

PcaModel pca_fit(std::span<const double> features, std::size_t rows, std::size_t dim) {
    if (rows < 4 || dim < 3) throw DataError("pca_fit: need at least 4 samples of dimension >= 3");
    if (features.size() != rows * dim) throw DimensionError("pca_fit: feature buffer size mismatch");
    const auto n = static_cast<Eigen::Index>(rows), d = static_cast<Eigen::Index>(dim);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(features.data(), n, d);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centred = x.rowwise() - mean;
    const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(rows - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericError("pca_fit: eigen-decomposition failed");
    // Eigen sorts ascending.
    const Eigen::VectorXd values = eig.eigenvalues().reverse();
    Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
    const double total = std::max(0.0, values.sum());
    const double tol = std::max(1e-12, 1e-10 * std::abs(values[0]));

    PcaModel model;
    model.mean.assign(mean.data(), mean.data() + d);
    for (Eigen::Index i = 0; i < d; ++i)
        if (values[i] > tol) ++model.rank;
    model.padded = model.rank < 3;
    if (model.padded) {
        log_warn("pca_fit: feature covariance has rank " + std::to_string(model.rank) +
                 " < 3; padding with an orthonormal completion");
    }
    for (int c = 0; c < 3; ++c) {
        Eigen::VectorXd v = vectors.col(c);
        if (static_cast<std::size_t>(c) >= model.rank) {
            // Deterministic completion: Gram-Schmidt on the standard basis.
            for (Eigen::Index e = 0; e < d; ++e) {
                Eigen::VectorXd cand = Eigen::VectorXd::Unit(d, e);
                for (int p = 0; p < c; ++p) cand -= vectors.col(p).dot(cand) * vectors.col(p);
                if (cand.norm() > 1e-6) {
                    v = cand.normalized();
                    break;
                }
            }
        }
        canonical_sign(v);
        vectors.col(c) = v;
        model.components[static_cast<std::size_t>(c)].assign(v.data(), v.data() + d);
        model.explained[static_cast<std::size_t>(c)] =
            total > 0.0 && static_cast<std::size_t>(c) < model.rank ? std::max(0.0, values[c]) / total : 0.0;
    }
    return model;
}

PcaModel pca_fit(const std::vector<std::vector<double>>& features) {
    if (features.empty()) throw DataError("pca_fit: no samples");
    const std::size_t d = features.front().size();
    std::vector<double> flat;
    flat.reserve(features.size() * d);
    for (const auto& f : features) {
        if (f.size() != d) throw DimensionError("pca_fit: ragged feature rows");
        flat.insert(flat.end(), f.begin(), f.end());
    }
    return pca_fit(flat, features.size(), d);
}

Point3 pca_transform(const PcaModel& model, std::span<const double> feature) {
    if (feature.size() != model.dim()) {
        throw DimensionError("pca_transform: feature dimension " + std::to_string(feature.size()) +
                             " does not match fitted dimension " + std::to_string(model.dim()));
    }
    Point3 out{};
    for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < feature.size(); ++i) acc += (feature[i] - model.mean[i]) * model.components[c][i];
        out[c] = acc;
    }
    return out;
}

std::vector<Point3> pca_transform(const PcaModel& model, const std::vector<std::vector<double>>& features) {
    std::vector<Point3> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(pca_transform(model, f));
    return out;
}

nlohmann::json to_json(const PcaModel& m) {
    return nlohmann::json{{"mean", m.mean},
                          {"components", {m.components[0], m.components[1], m.components[2]}},
                          {"explained", m.explained},
                          {"rank", m.rank},
                          {"padded", m.padded}};
}

}  // namespace xsa
