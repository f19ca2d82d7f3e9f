#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace xsa {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of doubles. The leading dimension is the batch
/// dimension wherever a layer consumes one.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> values);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    /// Elements per leading-dimension row.
    std::size_t row_size() const;

    double* row(std::size_t i) { return data.data() + i * row_size(); }
    const double* row(std::size_t i) const { return data.data() + i * row_size(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    void fill(double v);
    Tensor reshaped(Shape s) const;
    /// Gather leading-dimension rows.
    Tensor take_rows(std::span<const std::size_t> rows) const;

    bool operator==(const Tensor&) const = default;
};

/// FNV-1a over raw bytes; used for parameter hash checks.
std::uint64_t hash_bytes(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_tensor(const Tensor& t, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace xsa
