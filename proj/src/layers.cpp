#include "xsadapt/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xsadapt/errors.hpp"

namespace xsa {

namespace {

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.9;

void he_uniform(Tensor& w, std::size_t fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w.data) v = rng.uniform(-limit, limit);
}

void require_rank(const Tensor& x, std::size_t rank, const char* who) {
    if (x.rank() != rank) {
        throw DimensionError(std::string(who) + ": expected rank " + std::to_string(rank) + " input, got " +
                             shape_str(x.shape));
    }
}

std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride, const char* who) {
    if (in < kernel) {
        throw DimensionError(std::string(who) + ": kernel " + std::to_string(kernel) + " exceeds input extent " +
                             std::to_string(in));
    }
    return (in - kernel) / stride + 1;
}

std::size_t count_params(std::span<const std::unique_ptr<Layer>> layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<const Layer&>(*l).params().size();
    return n;
}

std::vector<std::unique_ptr<Layer>> build_sequence(const std::vector<LayerSpec>& specs) {
    std::vector<std::unique_ptr<Layer>> out;
    out.reserve(specs.size());
    for (const auto& s : specs) out.push_back(make_layer(s));
    return out;
}

std::vector<std::unique_ptr<Layer>> clone_sequence(const std::vector<std::unique_ptr<Layer>>& layers) {
    std::vector<std::unique_ptr<Layer>> out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(l->clone());
    return out;
}

// ---------------------------------------------------------------------------

class Dense final : public Layer {
public:
    Dense(std::size_t in, std::size_t out, bool l2)
        : w_{"weight", Tensor({out, in}), l2}, b_{"bias", Tensor({out}), false} {}

    LayerKind kind() const override { return LayerKind::dense; }
    LayerSpec spec() const override {
        LayerSpec s;
        s.kind = LayerKind::dense;
        s.in = in();
        s.out = out();
        s.l2 = w_.l2;
        return s;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

    Shape output_shape(const Shape& in_shape) const override {
        if (in_shape.size() != 1 || in_shape[0] != in()) {
            throw DimensionError("dense: expected input [" + std::to_string(in()) + "], got " + shape_str(in_shape));
        }
        return {out()};
    }

    Tensor forward(const Tensor& x, Mode, Rng&, LayerCache*) override {
        require_rank(x, 2, "dense");
        if (x.dim(1) != in()) throw DimensionError("dense: input width mismatch " + shape_str(x.shape));
        const std::size_t n = x.dim(0), ni = in(), no = out();
        Tensor y({n, no});
        for (std::size_t r = 0; r < n; ++r) {
            const double* xr = x.row(r);
            double* yr = y.row(r);
            for (std::size_t o = 0; o < no; ++o) {
                const double* wr = w_.value.data.data() + o * ni;
                double acc = b_.value[o];
                for (std::size_t i = 0; i < ni; ++i) acc += wr[i] * xr[i];
                yr[o] = acc;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy, const LayerCache&, std::span<Tensor> grads,
                    bool need_input_grad) const override {
        const std::size_t n = x.dim(0), ni = in(), no = out();
        if (!grads.empty()) {
            double* gw = grads[0].data.data();
            double* gb = grads[1].data.data();
            for (std::size_t r = 0; r < n; ++r) {
                const double* xr = x.row(r);
                const double* gr = gy.row(r);
                for (std::size_t o = 0; o < no; ++o) {
                    const double g = gr[o];
                    if (g == 0.0) continue;
                    gb[o] += g;
                    double* gwr = gw + o * ni;
                    for (std::size_t i = 0; i < ni; ++i) gwr[i] += g * xr[i];
                }
            }
        }
        if (!need_input_grad) return {};
        Tensor gx(x.shape);
        for (std::size_t r = 0; r < n; ++r) {
            const double* gr = gy.row(r);
            double* gxr = gx.row(r);
            for (std::size_t o = 0; o < no; ++o) {
                const double g = gr[o];
                if (g == 0.0) continue;
                const double* wr = w_.value.data.data() + o * ni;
                for (std::size_t i = 0; i < ni; ++i) gxr[i] += g * wr[i];
            }
        }
        return gx;
    }

    std::vector<Param*> params() override { return {&w_, &b_}; }
    std::vector<const Param*> params() const override { return {&w_, &b_}; }
    void init(Rng& rng) override {
        he_uniform(w_.value, in(), rng);
        b_.value.fill(0.0);
    }

private:
    std::size_t in() const { return w_.value.dim(1); }
    std::size_t out() const { return w_.value.dim(0); }

    Param w_;
    Param b_;
};

// ---------------------------------------------------------------------------
// Valid (unpadded) 1-D convolution over [N, C, L].

class Conv1d final : public Layer {
public:
    Conv1d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, bool l2)
        : w_{"weight", Tensor({out, in, kernel}), l2}, b_{"bias", Tensor({out}), false}, stride_(stride) {}

    LayerKind kind() const override { return LayerKind::conv1d; }
    LayerSpec spec() const override {
        LayerSpec s;
        s.kind = LayerKind::conv1d;
        s.in = w_.value.dim(1);
        s.out = w_.value.dim(0);
        s.kernel_w = w_.value.dim(2);
        s.stride_w = stride_;
        s.l2 = w_.l2;
        return s;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1d>(*this); }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 2 || in[0] != w_.value.dim(1)) {
            throw DimensionError("conv1d: expected [" + std::to_string(w_.value.dim(1)) + ", L] input, got " +
                                 shape_str(in));
        }
        return {w_.value.dim(0), conv_out(in[1], w_.value.dim(2), stride_, "conv1d")};
    }

    Tensor forward(const Tensor& x, Mode, Rng&, LayerCache*) override {
        require_rank(x, 3, "conv1d");
        const Shape os = output_shape({x.dim(1), x.dim(2)});
        const std::size_t n = x.dim(0), ci = x.dim(1), len = x.dim(2);
        const std::size_t co = os[0], lo = os[1], k = w_.value.dim(2);
        Tensor y({n, co, lo});
        const double* w = w_.value.data.data();
        for (std::size_t r = 0; r < n; ++r) {
            const double* xr = x.row(r);
            double* yr = y.row(r);
            for (std::size_t o = 0; o < co; ++o) {
                double* yo = yr + o * lo;
                std::fill(yo, yo + lo, b_.value[o]);
                for (std::size_t i = 0; i < ci; ++i) {
                    const double* wk = w + (o * ci + i) * k;
                    const double* xi = xr + i * len;
                    for (std::size_t t = 0; t < lo; ++t) {
                        const double* xs = xi + t * stride_;
                        double acc = 0.0;
                        for (std::size_t q = 0; q < k; ++q) acc += wk[q] * xs[q];
                        yo[t] += acc;
                    }
                }
            }
        }
        return y;
    }

    Tensor backward(const Tensor& x, const Tensor& y, const Tensor& gy, const LayerCache&, std::span<Tensor> grads,
                    bool need_input_grad) const override {
        const std::size_t n = x.dim(0), ci = x.dim(1), len = x.dim(2);
        const std::size_t co = y.dim(1), lo = y.dim(2), k = w_.value.dim(2);
        const double* w = w_.value.data.data();
        if (!grads.empty()) {
            double* gw = grads[0].data.data();
            double* gb = grads[1].data.data();
            for (std::size_t r = 0; r < n; ++r) {
                const double* xr = x.row(r);
                const double* gr = gy.row(r);
                for (std::size_t o = 0; o < co; ++o) {
                    const double* go = gr + o * lo;
                    for (std::size_t t = 0; t < lo; ++t) gb[o] += go[t];
                    for (std::size_t i = 0; i < ci; ++i) {
                        double* gwk = gw + (o * ci + i) * k;
                        const double* xi = xr + i * len;
                        for (std::size_t t = 0; t < lo; ++t) {
                            const double g = go[t];
                            const double* xs = xi + t * stride_;
                            for (std::size_t q = 0; q < k; ++q) gwk[q] += g * xs[q];
                        }
                    }
                }
            }
        }
        if (!need_input_grad) return {};
        Tensor gx(x.shape);
        for (std::size_t r = 0; r < n; ++r) {
            const double* gr = gy.row(r);
            double* gxr = gx.row(r);
            for (std::size_t o = 0; o < co; ++o) {
                const double* go = gr + o * lo;
                for (std::size_t i = 0; i < ci; ++i) {
                    const double* wk = w + (o * ci + i) * k;
                    double* gxi = gxr + i * len;
                    for (std::size_t t = 0; t < lo; ++t) {
                        const double g = go[t];
                        double* gs = gxi + t * stride_;
                        for (std::size_t q = 0; q < k; ++q) gs[q] += g * wk[q];
                    }
                }
            }
        }
        return gx;
    }

    std::vector<Param*> params() override { return {&w_, &b_}; }
    std::vector<const Param*> params() const override { return {&w_, &b_}; }
    void init(Rng& rng) override {
        he_uniform(w_.value, w_.value.dim(1) * w_.value.dim(2), rng);
        b_.value.fill(0.0);
    }

private:
    Param w_;
    Param b_;
    std::size_t stride_;
};

// ---------------------------------------------------------------------------
// Valid 2-D convolution over [N, C, H, W]; H is time, W is sensor channel.

class Conv2d final : public Layer {
public:
    Conv2d(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw, bool l2)
        : w_{"weight", Tensor({out, in, kh, kw}), l2}, b_{"bias", Tensor({out}), false}, sh_(sh), sw_(sw) {}

    LayerKind kind() const override { return LayerKind::conv2d; }
    LayerSpec spec() const override {
        LayerSpec s;
        s.kind = LayerKind::conv2d;
        s.in = w_.value.dim(1);
        s.out = w_.value.dim(0);
        s.kernel_h = w_.value.dim(2);
        s.kernel_w = w_.value.dim(3);
        s.stride_h = sh_;
        s.stride_w = sw_;
        s.l2 = w_.l2;
        return s;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 3 || in[0] != w_.value.dim(1)) {
            throw DimensionError("conv2d: expected [" + std::to_string(w_.value.dim(1)) + ", H, W] input, got " +
                                 shape_str(in));
        }
        return {w_.value.dim(0), conv_out(in[1], w_.value.dim(2), sh_, "conv2d"),
                conv_out(in[2], w_.value.dim(3), sw_, "conv2d")};
    }

    Tensor forward(const Tensor& x, Mode, Rng&, LayerCache*) override {
        require_rank(x, 4, "conv2d");
        const Shape os = output_shape({x.dim(1), x.dim(2), x.dim(3)});
        const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
        const std::size_t co = os[0], ho = os[1], wo = os[2];
        const std::size_t kh = w_.value.dim(2), kw = w_.value.dim(3);
        Tensor y({n, co, ho, wo});
        const double* w = w_.value.data.data();
        for (std::size_t r = 0; r < n; ++r) {
            const double* xr = x.row(r);
            double* yr = y.row(r);
            for (std::size_t o = 0; o < co; ++o) {
                double* yo = yr + o * ho * wo;
                std::fill(yo, yo + ho * wo, b_.value[o]);
                for (std::size_t i = 0; i < ci; ++i) {
                    const double* wk = w + (o * ci + i) * kh * kw;
                    const double* xi = xr + i * h * wd;
                    for (std::size_t a = 0; a < ho; ++a) {
                        for (std::size_t b = 0; b < wo; ++b) {
                            double acc = 0.0;
                            for (std::size_t p = 0; p < kh; ++p) {
                                const double* xs = xi + (a * sh_ + p) * wd + b * sw_;
                                const double* wp = wk + p * kw;
                                for (std::size_t q = 0; q < kw; ++q) acc += wp[q] * xs[q];
                            }
                            yo[a * wo + b] += acc;
                        }
                    }
                }
            }
        }
        return y;
    }

    Tensor backward(const Tensor& x, const Tensor& y, const Tensor& gy, const LayerCache&, std::span<Tensor> grads,
                    bool need_input_grad) const override {
        const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
        const std::size_t co = y.dim(1), ho = y.dim(2), wo = y.dim(3);
        const std::size_t kh = w_.value.dim(2), kw = w_.value.dim(3);
        const double* w = w_.value.data.data();
        if (!grads.empty()) {
            double* gw = grads[0].data.data();
            double* gb = grads[1].data.data();
            for (std::size_t r = 0; r < n; ++r) {
                const double* xr = x.row(r);
                const double* gr = gy.row(r);
                for (std::size_t o = 0; o < co; ++o) {
                    const double* go = gr + o * ho * wo;
                    for (std::size_t t = 0; t < ho * wo; ++t) gb[o] += go[t];
                    for (std::size_t i = 0; i < ci; ++i) {
                        double* gwk = gw + (o * ci + i) * kh * kw;
                        const double* xi = xr + i * h * wd;
                        for (std::size_t a = 0; a < ho; ++a) {
                            for (std::size_t b = 0; b < wo; ++b) {
                                const double g = go[a * wo + b];
                                for (std::size_t p = 0; p < kh; ++p) {
                                    const double* xs = xi + (a * sh_ + p) * wd + b * sw_;
                                    double* gwp = gwk + p * kw;
                                    for (std::size_t q = 0; q < kw; ++q) gwp[q] += g * xs[q];
                                }
                            }
                        }
                    }
                }
            }
        }
        if (!need_input_grad) return {};
        Tensor gx(x.shape);
        for (std::size_t r = 0; r < n; ++r) {
            const double* gr = gy.row(r);
            double* gxr = gx.row(r);
            for (std::size_t o = 0; o < co; ++o) {
                const double* go = gr + o * ho * wo;
                for (std::size_t i = 0; i < ci; ++i) {
                    const double* wk = w + (o * ci + i) * kh * kw;
                    double* gxi = gxr + i * h * wd;
                    for (std::size_t a = 0; a < ho; ++a) {
                        for (std::size_t b = 0; b < wo; ++b) {
                            const double g = go[a * wo + b];
                            for (std::size_t p = 0; p < kh; ++p) {
                                double* gs = gxi + (a * sh_ + p) * wd + b * sw_;
                                const double* wp = wk + p * kw;
                                for (std::size_t q = 0; q < kw; ++q) gs[q] += g * wp[q];
                            }
                        }
                    }
                }
            }
        }
        return gx;
    }

    std::vector<Param*> params() override { return {&w_, &b_}; }
    std::vector<const Param*> params() const override { return {&w_, &b_}; }
    void init(Rng& rng) override {
        he_uniform(w_.value, w_.value.dim(1) * w_.value.dim(2) * w_.value.dim(3), rng);
        b_.value.fill(0.0);
    }

private:
    Param w_;
    Param b_;
    std::size_t sh_;
    std::size_t sw_;
};

// ---------------------------------------------------------------------------

class Relu final : public Layer {
public:
    LayerKind kind() const override { return LayerKind::relu; }
    LayerSpec spec() const override { return LayerSpec{.kind = LayerKind::relu}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
    Shape output_shape(const Shape& in) const override { return in; }

    Tensor forward(const Tensor& x, Mode, Rng&, LayerCache*) override {
        Tensor y = x;
        for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
        return y;
    }

    Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy, const LayerCache&, std::span<Tensor>,
                    bool need_input_grad) const override {
        if (!need_input_grad) return {};
        Tensor gx(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
        return gx;
    }
};

// Inverted dropout: the train-mode output is rescaled so eval mode is identity.
class Dropout final : public Layer {
public:
    explicit Dropout(double rate) : rate_(rate) {}

    LayerKind kind() const override { return LayerKind::dropout; }
    LayerSpec spec() const override { return LayerSpec{.kind = LayerKind::dropout, .rate = rate_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }
    Shape output_shape(const Shape& in) const override { return in; }

    Tensor forward(const Tensor& x, Mode mode, Rng& rng, LayerCache* cache) override {
        if (mode == Mode::eval || rate_ == 0.0) {
            if (cache) cache->values.clear();
            return x;
        }
        const double keep = 1.0 - rate_;
        std::vector<double> mask(x.size());
        for (auto& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
        Tensor y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
        if (cache) cache->values = std::move(mask);
        return y;
    }

    Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy, const LayerCache& cache, std::span<Tensor>,
                    bool need_input_grad) const override {
        if (!need_input_grad) return {};
        if (cache.values.empty()) return gy;
        Tensor gx(x.shape);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = gy[i] * cache.values[i];
        return gx;
    }

private:
    double rate_;
};

// ---------------------------------------------------------------------------
// Normalises per feature for [N, F] input and per channel (over batch and all
// trailing positions) for [N, C, ...] input.

class BatchNorm final : public Layer {
public:
    explicit BatchNorm(std::size_t channels)
        : gamma_{"gamma", Tensor({channels}, 1.0), false},
          beta_{"beta", Tensor({channels}), false},
          running_mean_({channels}),
          running_var_({channels}, 1.0) {}

    LayerKind kind() const override { return LayerKind::batchnorm; }
    LayerSpec spec() const override { return LayerSpec{.kind = LayerKind::batchnorm, .in = channels()}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

    Shape output_shape(const Shape& in) const override {
        if (in.empty() || in[0] != channels()) {
            throw DimensionError("batchnorm: expected leading feature dim " + std::to_string(channels()) + ", got " +
                                 shape_str(in));
        }
        return in;
    }

    Tensor forward(const Tensor& x, Mode mode, Rng&, LayerCache* cache) override {
        if (x.rank() < 2 || x.dim(1) != channels()) throw DimensionError("batchnorm: bad input " + shape_str(x.shape));
        const std::size_t n = x.dim(0), c = channels(), inner = x.row_size() / c;
        std::vector<double> mean(c, 0.0), invstd(c, 0.0);
        if (mode == Mode::train) {
            const double m = static_cast<double>(n * inner);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t k = 0; k < c; ++k) {
                    const double* p = x.row(r) + k * inner;
                    for (std::size_t t = 0; t < inner; ++t) mean[k] += p[t];
                }
            for (auto& v : mean) v /= m;
            std::vector<double> var(c, 0.0);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t k = 0; k < c; ++k) {
                    const double* p = x.row(r) + k * inner;
                    for (std::size_t t = 0; t < inner; ++t) {
                        const double d = p[t] - mean[k];
                        var[k] += d * d;
                    }
                }
            for (std::size_t k = 0; k < c; ++k) {
                var[k] /= m;
                invstd[k] = 1.0 / std::sqrt(var[k] + kBatchNormEps);
                running_mean_[k] = kBatchNormMomentum * running_mean_[k] + (1.0 - kBatchNormMomentum) * mean[k];
                running_var_[k] = kBatchNormMomentum * running_var_[k] + (1.0 - kBatchNormMomentum) * var[k];
            }
        } else {
            for (std::size_t k = 0; k < c; ++k) {
                mean[k] = running_mean_[k];
                invstd[k] = 1.0 / std::sqrt(running_var_[k] + kBatchNormEps);
            }
        }
        Tensor y(x.shape);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < c; ++k) {
                const double* p = x.row(r) + k * inner;
                double* q = y.row(r) + k * inner;
                const double g = gamma_.value[k] * invstd[k], b = beta_.value[k];
                for (std::size_t t = 0; t < inner; ++t) q[t] = (p[t] - mean[k]) * g + b;
            }
        if (cache) {
            cache->values = mean;
            cache->values.insert(cache->values.end(), invstd.begin(), invstd.end());
            cache->index.assign(1, mode == Mode::train ? 1U : 0U);
        }
        return y;
    }

    Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy, const LayerCache& cache, std::span<Tensor> grads,
                    bool need_input_grad) const override {
        const std::size_t n = x.dim(0), c = channels(), inner = x.row_size() / c;
        const double m = static_cast<double>(n * inner);
        const double* mean = cache.values.data();
        const double* invstd = cache.values.data() + c;
        const bool batch_stats = !cache.index.empty() && cache.index[0] == 1U;
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < c; ++k) {
                const double* p = x.row(r) + k * inner;
                const double* g = gy.row(r) + k * inner;
                for (std::size_t t = 0; t < inner; ++t) {
                    sum_g[k] += g[t];
                    sum_gx[k] += g[t] * (p[t] - mean[k]) * invstd[k];
                }
            }
        if (!grads.empty()) {
            for (std::size_t k = 0; k < c; ++k) {
                grads[0][k] += sum_gx[k];
                grads[1][k] += sum_g[k];
            }
        }
        if (!need_input_grad) return {};
        Tensor gx(x.shape);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < c; ++k) {
                const double* p = x.row(r) + k * inner;
                const double* g = gy.row(r) + k * inner;
                double* o = gx.row(r) + k * inner;
                if (!batch_stats) {
                    // running statistics are constants
                    for (std::size_t t = 0; t < inner; ++t) o[t] = g[t] * gamma_.value[k] * invstd[k];
                    continue;
                }
                const double scale = gamma_.value[k] * invstd[k] / m;
                for (std::size_t t = 0; t < inner; ++t) {
                    const double xhat = (p[t] - mean[k]) * invstd[k];
                    o[t] = scale * (m * g[t] - sum_g[k] - xhat * sum_gx[k]);
                }
            }
        return gx;
    }

    std::vector<Param*> params() override { return {&gamma_, &beta_}; }
    std::vector<const Param*> params() const override { return {&gamma_, &beta_}; }
    std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }
    std::vector<const Tensor*> buffers() const override { return {&running_mean_, &running_var_}; }
    void init(Rng&) override {
        gamma_.value.fill(1.0);
        beta_.value.fill(0.0);
        running_mean_.fill(0.0);
        running_var_.fill(1.0);
    }

private:
    std::size_t channels() const { return gamma_.value.size(); }

    Param gamma_;
    Param beta_;
    Tensor running_mean_;
    Tensor running_var_;
};

// ---------------------------------------------------------------------------

class GlobalMaxPool1d final : public Layer {
public:
    LayerKind kind() const override { return LayerKind::global_max_pool_1d; }
    LayerSpec spec() const override { return LayerSpec{.kind = LayerKind::global_max_pool_1d}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalMaxPool1d>(*this); }
    Shape output_shape(const Shape& in) const override {
        if (in.size() != 2 || in[1] == 0) throw DimensionError("global_max_pool_1d: expected [C, L] input");
        return {in[0]};
    }

    Tensor forward(const Tensor& x, Mode, Rng&, LayerCache* cache) override {
        require_rank(x, 3, "global_max_pool_1d");
        const std::size_t n = x.dim(0), c = x.dim(1), len = x.dim(2);
        Tensor y({n, c});
        if (cache) cache->index.assign(n * c, 0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < c; ++k) {
                const double* p = x.row(r) + k * len;
                std::size_t best = 0;
                for (std::size_t t = 1; t < len; ++t)
                    if (p[t] > p[best]) best = t;
                y[r * c + k] = p[best];
                if (cache) cache->index[r * c + k] = static_cast<std::uint32_t>(best);
            }
        return y;
    }

    Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy, const LayerCache& cache, std::span<Tensor>,
                    bool need_input_grad) const override {
        if (!need_input_grad) return {};
        const std::size_t n = x.dim(0), c = x.dim(1), len = x.dim(2);
        Tensor gx(x.shape);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < c; ++k) gx.row(r)[k * len + cache.index[r * c + k]] = gy[r * c + k];
        return gx;
    }
};

// ---------------------------------------------------------------------------

class Softmax final : public Layer {
public:
    LayerKind kind() const override { return LayerKind::softmax; }
    LayerSpec spec() const override { return LayerSpec{.kind = LayerKind::softmax}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Softmax>(*this); }
    Shape output_shape(const Shape& in) const override {
        if (in.size() != 1) throw DimensionError("softmax: expected flat per-sample input, got " + shape_str(in));
        return in;
    }

    Tensor forward(const Tensor& x, Mode, Rng&, LayerCache*) override {
        require_rank(x, 2, "softmax");
        Tensor y(x.shape);
        const std::size_t k = x.dim(1);
        for (std::size_t r = 0; r < x.dim(0); ++r) {
            const double* p = x.row(r);
            double* q = y.row(r);
            const double mx = *std::max_element(p, p + k);
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                q[j] = std::exp(p[j] - mx);
                sum += q[j];
            }
            for (std::size_t j = 0; j < k; ++j) q[j] /= sum;
        }
        return y;
    }

    Tensor backward(const Tensor& x, const Tensor& y, const Tensor& gy, const LayerCache&, std::span<Tensor>,
                    bool need_input_grad) const override {
        if (!need_input_grad) return {};
        Tensor gx(x.shape);
        const std::size_t k = x.dim(1);
        for (std::size_t r = 0; r < x.dim(0); ++r) {
            const double* yr = y.row(r);
            const double* g = gy.row(r);
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += g[j] * yr[j];
            for (std::size_t j = 0; j < k; ++j) gx.row(r)[j] = yr[j] * (g[j] - dot);
        }
        return gx;
    }
};

class Flatten final : public Layer {
public:
    LayerKind kind() const override { return LayerKind::flatten; }
    LayerSpec spec() const override { return LayerSpec{.kind = LayerKind::flatten}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }
    Shape output_shape(const Shape& in) const override { return {shape_size(in)}; }

    Tensor forward(const Tensor& x, Mode, Rng&, LayerCache*) override {
        return x.reshaped({x.dim(0), x.row_size()});
    }
    Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy, const LayerCache&, std::span<Tensor>,
                    bool need_input_grad) const override {
        if (!need_input_grad) return {};
        return gy.reshaped(x.shape);
    }
};

// ---------------------------------------------------------------------------
// Composite layers. Both flatten each sub-stack's output and concatenate the
// results along the feature axis.

class CompositeBase : public Layer {
public:
    std::vector<Param*> params() override {
        std::vector<Param*> out;
        for (auto& seq : branches_)
            for (auto& l : seq)
                for (auto* p : l->params()) out.push_back(p);
        return out;
    }
    std::vector<const Param*> params() const override {
        std::vector<const Param*> out;
        for (const auto& seq : branches_)
            for (const auto& l : seq)
                for (const auto* p : static_cast<const Layer&>(*l).params()) out.push_back(p);
        return out;
    }
    std::vector<Tensor*> buffers() override {
        std::vector<Tensor*> out;
        for (auto& seq : branches_)
            for (auto& l : seq)
                for (auto* b : l->buffers()) out.push_back(b);
        return out;
    }
    std::vector<const Tensor*> buffers() const override {
        std::vector<const Tensor*> out;
        for (const auto& seq : branches_)
            for (const auto& l : seq)
                for (const auto* b : static_cast<const Layer&>(*l).buffers()) out.push_back(b);
        return out;
    }
    void init(Rng& rng) override {
        for (auto& seq : branches_)
            for (auto& l : seq) l->init(rng);
    }

protected:
    CompositeBase() = default;
    CompositeBase(const CompositeBase& other) {
        for (const auto& seq : other.branches_) branches_.push_back(clone_sequence(seq));
    }

    std::vector<std::vector<LayerSpec>> child_specs() const {
        std::vector<std::vector<LayerSpec>> out;
        for (const auto& seq : branches_) {
            std::vector<LayerSpec> specs;
            for (const auto& l : seq) specs.push_back(l->spec());
            out.push_back(std::move(specs));
        }
        return out;
    }

    /// Runs branch `b` on `input` and appends its flattened output to `out`
    /// at column `offset`.
    std::size_t run_branch(std::size_t b, const Tensor& input, Mode mode, Rng& rng, LayerCache* cache, Tensor& out,
                           std::size_t offset) {
        SubTrace* trace = nullptr;
        if (cache) trace = &cache->children[b];
        const Tensor y = run_forward(branches_[b], input, mode, rng, trace);
        const std::size_t width = y.row_size();
        for (std::size_t r = 0; r < y.dim(0); ++r) std::copy_n(y.row(r), width, out.row(r) + offset);
        return width;
    }

    /// Backprops the slice [offset, offset + width) of `gy` through branch b.
    Tensor backprop_branch(std::size_t b, const LayerCache& cache, const Tensor& gy, std::size_t offset,
                           std::span<Tensor> grads, std::size_t& grad_offset, bool need_input_grad) const {
        const SubTrace& trace = cache.children[b];
        const Tensor& yb = trace.acts.back();
        const std::size_t width = yb.row_size();
        Tensor g(yb.shape);
        for (std::size_t r = 0; r < gy.dim(0); ++r) std::copy_n(gy.row(r) + offset, width, g.row(r));
        const std::size_t np = count_params(branches_[b]);
        std::span<Tensor> sub = grads.empty() ? std::span<Tensor>{} : grads.subspan(grad_offset, np);
        grad_offset += np;
        return run_backward(branches_[b], trace, g, sub, need_input_grad);
    }

    std::vector<std::vector<std::unique_ptr<Layer>>> branches_;
};

class StreamSplit final : public CompositeBase {
public:
    StreamSplit(std::size_t streams, const std::vector<std::vector<LayerSpec>>& children) : streams_(streams) {
        if (children.size() != streams) throw ConfigError("stream_split: one sub-stack per stream required");
        for (const auto& c : children) branches_.push_back(build_sequence(c));
    }
    StreamSplit(const StreamSplit&) = default;

    LayerKind kind() const override { return LayerKind::stream_split; }
    LayerSpec spec() const override {
        LayerSpec s;
        s.kind = LayerKind::stream_split;
        s.streams = streams_;
        s.children = child_specs();
        return s;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<StreamSplit>(*this); }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 2 || in[0] % streams_ != 0) {
            throw DimensionError("stream_split: channel count must divide evenly into " + std::to_string(streams_) +
                                 " streams, got " + shape_str(in));
        }
        std::size_t total = 0;
        for (const auto& seq : branches_) total += shape_size(sequence_output_shape(seq, stream_shape(in)));
        return {total};
    }

    Tensor forward(const Tensor& x, Mode mode, Rng& rng, LayerCache* cache) override {
        require_rank(x, 3, "stream_split");
        const Shape os = output_shape({x.dim(1), x.dim(2)});
        const std::size_t n = x.dim(0);
        Tensor y({n, os[0]});
        if (cache) cache->children.assign(streams_, SubTrace{});
        std::size_t offset = 0;
        for (std::size_t s = 0; s < streams_; ++s) offset += run_branch(s, slice(x, s), mode, rng, cache, y, offset);
        return y;
    }

    Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy, const LayerCache& cache, std::span<Tensor> grads,
                    bool need_input_grad) const override {
        Tensor gx;
        if (need_input_grad) gx = Tensor(x.shape);
        std::size_t offset = 0, grad_offset = 0;
        const std::size_t n = x.dim(0), cs = x.dim(1) / streams_, len = x.dim(2);
        for (std::size_t s = 0; s < streams_; ++s) {
            const std::size_t width = cache.children[s].acts.back().row_size();
            Tensor gs = backprop_branch(s, cache, gy, offset, grads, grad_offset, need_input_grad);
            offset += width;
            if (!need_input_grad) continue;
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t t = 0; t < len; ++t)
                    for (std::size_t c = 0; c < cs; ++c) gx.row(r)[(s * cs + c) * len + t] = gs.row(r)[t * cs + c];
        }
        return gx;
    }

private:
    Shape stream_shape(const Shape& in) const { return {1, in[1], in[0] / streams_}; }

    // [N, C, L] channels [s*Cs, (s+1)*Cs) -> [N, 1, L, Cs] (time as height).
    Tensor slice(const Tensor& x, std::size_t s) const {
        const std::size_t n = x.dim(0), cs = x.dim(1) / streams_, len = x.dim(2);
        Tensor out({n, 1, len, cs});
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t t = 0; t < len; ++t)
                for (std::size_t c = 0; c < cs; ++c) out.row(r)[t * cs + c] = x.row(r)[(s * cs + c) * len + t];
        return out;
    }

    std::size_t streams_;
};

class BranchConcat final : public CompositeBase {
public:
    explicit BranchConcat(const std::vector<std::vector<LayerSpec>>& children) {
        if (children.empty()) throw ConfigError("branch_concat: at least one branch required");
        for (const auto& c : children) branches_.push_back(build_sequence(c));
    }
    BranchConcat(const BranchConcat&) = default;

    LayerKind kind() const override { return LayerKind::branch_concat; }
    LayerSpec spec() const override {
        LayerSpec s;
        s.kind = LayerKind::branch_concat;
        s.children = child_specs();
        return s;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<BranchConcat>(*this); }

    Shape output_shape(const Shape& in) const override {
        std::size_t total = 0;
        for (const auto& seq : branches_) total += shape_size(sequence_output_shape(seq, in));
        return {total};
    }

    Tensor forward(const Tensor& x, Mode mode, Rng& rng, LayerCache* cache) override {
        Shape in(x.shape.begin() + 1, x.shape.end());
        const Shape os = output_shape(in);
        Tensor y({x.dim(0), os[0]});
        if (cache) cache->children.assign(branches_.size(), SubTrace{});
        std::size_t offset = 0;
        for (std::size_t b = 0; b < branches_.size(); ++b) offset += run_branch(b, x, mode, rng, cache, y, offset);
        return y;
    }

    Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy, const LayerCache& cache, std::span<Tensor> grads,
                    bool need_input_grad) const override {
        Tensor gx;
        if (need_input_grad) gx = Tensor(x.shape);
        std::size_t offset = 0, grad_offset = 0;
        for (std::size_t b = 0; b < branches_.size(); ++b) {
            const std::size_t width = cache.children[b].acts.back().row_size();
            Tensor gb = backprop_branch(b, cache, gy, offset, grads, grad_offset, need_input_grad);
            offset += width;
            if (need_input_grad)
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gb[i];
        }
        return gx;
    }
};

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv1d: return "conv1d";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::dense: return "dense";
        case LayerKind::relu: return "relu";
        case LayerKind::dropout: return "dropout";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::global_max_pool_1d: return "global_max_pool_1d";
        case LayerKind::softmax: return "softmax";
        case LayerKind::flatten: return "flatten";
        case LayerKind::stream_split: return "stream_split";
        case LayerKind::branch_concat: return "branch_concat";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
    for (auto k : {LayerKind::conv1d, LayerKind::conv2d, LayerKind::dense, LayerKind::relu, LayerKind::dropout,
                   LayerKind::batchnorm, LayerKind::global_max_pool_1d, LayerKind::softmax, LayerKind::flatten,
                   LayerKind::stream_split, LayerKind::branch_concat}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown layer kind '" + name + "'");
}

void to_json(nlohmann::json& j, const LayerSpec& s) {
    j = nlohmann::json::object();
    j["kind"] = to_string(s.kind);
    switch (s.kind) {
        case LayerKind::dense:
            j["in"] = s.in;
            j["out"] = s.out;
            j["l2"] = s.l2;
            break;
        case LayerKind::conv1d:
        case LayerKind::conv2d:
            j["in"] = s.in;
            j["out"] = s.out;
            j["kernel"] = {s.kernel_h, s.kernel_w};
            j["stride"] = {s.stride_h, s.stride_w};
            j["l2"] = s.l2;
            break;
        case LayerKind::dropout: j["rate"] = s.rate; break;
        case LayerKind::batchnorm: j["channels"] = s.in; break;
        case LayerKind::stream_split:
            j["streams"] = s.streams;
            j["children"] = s.children;
            break;
        case LayerKind::branch_concat: j["children"] = s.children; break;
        default: break;
    }
}

void from_json(const nlohmann::json& j, LayerSpec& s) {
    s = LayerSpec{};
    s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("in")) s.in = j["in"].get<std::size_t>();
    if (j.contains("out")) s.out = j["out"].get<std::size_t>();
    if (j.contains("l2")) s.l2 = j["l2"].get<bool>();
    if (j.contains("kernel")) {
        s.kernel_h = j["kernel"][0].get<std::size_t>();
        s.kernel_w = j["kernel"][1].get<std::size_t>();
    }
    if (j.contains("stride")) {
        s.stride_h = j["stride"][0].get<std::size_t>();
        s.stride_w = j["stride"][1].get<std::size_t>();
    }
    if (j.contains("rate")) s.rate = j["rate"].get<double>();
    if (j.contains("channels")) s.in = j["channels"].get<std::size_t>();
    if (j.contains("streams")) s.streams = j["streams"].get<std::size_t>();
    if (j.contains("children")) s.children = j["children"].get<std::vector<std::vector<LayerSpec>>>();
}

std::unique_ptr<Layer> make_layer(const LayerSpec& s) {
    auto positive = [&](std::size_t v, const char* what) {
        if (v == 0) throw ConfigError(to_string(s.kind) + ": " + what + " must be positive");
    };
    switch (s.kind) {
        case LayerKind::dense:
            positive(s.in, "input width");
            positive(s.out, "units");
            return std::make_unique<Dense>(s.in, s.out, s.l2);
        case LayerKind::conv1d:
            positive(s.in, "input channels");
            positive(s.out, "feature maps");
            positive(s.kernel_w, "kernel");
            positive(s.stride_w, "stride");
            return std::make_unique<Conv1d>(s.in, s.out, s.kernel_w, s.stride_w, s.l2);
        case LayerKind::conv2d:
            positive(s.in, "input channels");
            positive(s.out, "feature maps");
            positive(s.kernel_h, "kernel height");
            positive(s.kernel_w, "kernel width");
            positive(s.stride_h, "stride");
            positive(s.stride_w, "stride");
            return std::make_unique<Conv2d>(s.in, s.out, s.kernel_h, s.kernel_w, s.stride_h, s.stride_w, s.l2);
        case LayerKind::relu: return std::make_unique<Relu>();
        case LayerKind::dropout:
            if (!(s.rate >= 0.0 && s.rate < 1.0)) throw ConfigError("dropout: rate must lie in [0, 1)");
            return std::make_unique<Dropout>(s.rate);
        case LayerKind::batchnorm:
            positive(s.in, "channels");
            return std::make_unique<BatchNorm>(s.in);
        case LayerKind::global_max_pool_1d: return std::make_unique<GlobalMaxPool1d>();
        case LayerKind::softmax: return std::make_unique<Softmax>();
        case LayerKind::flatten: return std::make_unique<Flatten>();
        case LayerKind::stream_split:
            positive(s.streams, "streams");
            return std::make_unique<StreamSplit>(s.streams, s.children);
        case LayerKind::branch_concat: return std::make_unique<BranchConcat>(s.children);
    }
    throw ConfigError("unhandled layer kind");
}

Tensor run_forward(std::span<const std::unique_ptr<Layer>> layers, const Tensor& x, Mode mode, Rng& rng,
                   SubTrace* trace) {
    if (trace) {
        trace->acts.clear();
        trace->caches.assign(layers.size(), LayerCache{});
        trace->acts.reserve(layers.size() + 1);
        trace->acts.push_back(x);
    }
    Tensor cur = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        cur = layers[i]->forward(cur, mode, rng, trace ? &trace->caches[i] : nullptr);
        if (trace) trace->acts.push_back(cur);
    }
    return cur;
}

Tensor run_backward(std::span<const std::unique_ptr<Layer>> layers, const SubTrace& trace, const Tensor& gy,
                    std::span<Tensor> grads, bool need_input_grad) {
    std::size_t offset = grads.size();
    Tensor g = gy;
    for (std::size_t i = layers.size(); i-- > 0;) {
        const Layer& layer = *layers[i];
        const std::size_t np = layer.params().size();
        std::span<Tensor> sub;
        if (!grads.empty()) {
            offset -= np;
            sub = grads.subspan(offset, np);
        }
        const bool need = need_input_grad || i > 0;
        g = layer.backward(trace.acts[i], trace.acts[i + 1], g, trace.caches[i], sub, need);
    }
    return g;
}

Shape sequence_output_shape(std::span<const std::unique_ptr<Layer>> layers, Shape in) {
    for (const auto& l : layers) in = l->output_shape(in);
    return in;
}

}  // namespace xsa
