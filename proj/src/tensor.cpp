#include "xsadapt/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "xsadapt/errors.hpp"

namespace xsa {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape)) {
        throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_str(shape));
    }
}

std::size_t Tensor::row_size() const {
    if (shape.empty() || shape[0] == 0) return 0;
    return data.size() / shape[0];
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

Tensor Tensor::reshaped(Shape s) const {
    if (shape_size(s) != data.size()) {
        throw DimensionError("cannot reshape " + shape_str(shape) + " to " + shape_str(s));
    }
    return Tensor(std::move(s), data);
}

Tensor Tensor::take_rows(std::span<const std::size_t> rows) const {
    Shape s = shape;
    s.at(0) = rows.size();
    Tensor out(s);
    const std::size_t rs = row_size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= shape[0]) throw DimensionError("row index out of range");
        std::copy_n(row(rows[i]), rs, out.row(i));
    }
    return out;
}

std::uint64_t hash_bytes(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_tensor(const Tensor& t, std::uint64_t seed) {
    std::uint64_t h = hash_bytes(t.shape.data(), t.shape.size() * sizeof(std::size_t), seed);
    return hash_bytes(t.data.data(), t.data.size() * sizeof(double), h);
}

}  // namespace xsa
