#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "xsadapt/layers.hpp"

namespace xsa {

/// Forward record used by backward. `first_layer` > 0 when the forward pass
/// started from a cached intermediate activation.
struct Trace {
    Mode mode = Mode::eval;
    std::size_t first_layer = 0;
    SubTrace sub;

    /// Output of the whole network (softmax probabilities).
    const Tensor& output() const { return sub.acts.back(); }
    /// Activation entering layer `layer` (or the network output when
    /// `layer` equals the layer count).
    const Tensor& activation(std::size_t layer) const { return sub.acts.at(layer - first_layer); }
};

using Gradients = std::vector<Tensor>;

/// A sequential layer stack ending in softmax. Layers [0, frozen_prefix)
/// form the shared feature stack that fine-tuning never updates.
class Network {
public:
    explicit Network(Shape input_shape);
    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    /// Appends a layer, validating the shape chain (DimensionError wrapped
    /// as ConfigError when the chain breaks).
    void add(const LayerSpec& spec);

    void init(std::uint64_t seed);

    const Shape& input_shape() const { return input_shape_; }
    Shape output_shape() const;
    std::size_t layer_count() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return *layers_.at(i); }
    std::vector<LayerSpec> specs() const;

    std::size_t frozen_prefix() const { return frozen_prefix_; }
    void set_frozen_prefix(std::size_t n);
    /// Index of the activation exposed as the feature vector: the input of
    /// the final dense layer.
    std::size_t feature_layer() const { return feature_layer_; }
    void set_feature_layer(std::size_t n);

    /// Forward from layer `first` (x must then be that layer's input).
    /// Train mode draws dropout masks from `seed`.
    Trace forward(const Tensor& x, Mode mode, std::uint64_t seed = 0, std::size_t first = 0);
    /// Eval-mode forward over layers [first, last) without recording.
    Tensor forward_range(const Tensor& x, std::size_t first, std::size_t last) const;

    /// Backpropagates the gradient w.r.t. the pre-softmax logits. Returns one
    /// gradient per parameter of layers [max(trace.first_layer, stop), end),
    /// aligned with params(stop). Frozen layers are skipped unless `stop`
    /// reaches into them.
    Gradients backward(const Trace& trace, const Tensor& grad_logits, std::size_t stop) const;
    Gradients backward(const Trace& trace, const Tensor& grad_logits) const {
        return backward(trace, grad_logits, frozen_prefix_);
    }
    /// Backward from a gradient w.r.t. the softmax output itself.
    Gradients backward_from_output(const Trace& trace, const Tensor& grad_probs, std::size_t stop = 0) const;

    /// Parameters of layers [from, end).
    std::vector<Param*> params(std::size_t from = 0);
    std::vector<const Param*> params(std::size_t from = 0) const;
    std::vector<Param*> trainable_params() { return params(frozen_prefix_); }
    std::size_t param_index(std::size_t layer) const;
    std::size_t parameter_count() const;

    std::vector<Tensor*> buffers();
    std::vector<const Tensor*> buffers() const;

    std::uint64_t hash() const;
    /// Hash of the feature-stack parameters and buffers.
    std::uint64_t feature_stack_hash() const;

private:
    Gradients backward_impl(const Trace& trace, const Tensor& g, std::size_t from_layer, std::size_t stop) const;

    Shape input_shape_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<Shape> shapes_;  // shapes_[i] = per-sample input shape of layer i
    std::size_t frozen_prefix_ = 0;
    std::size_t feature_layer_ = 0;
};

struct LossResult {
    double loss = 0.0;
    Tensor grad_logits;
    std::size_t clamped = 0;  // rows whose true-class probability hit the clamp
};

/// Mean negative log-likelihood of `targets` under `probs` with the
/// gradient (probs - onehot) / batch w.r.t. the pre-softmax logits.
LossResult cross_entropy(const Tensor& probs, std::span<const int> targets);
/// One-hot (or soft) target rows.
LossResult cross_entropy(const Tensor& probs, const Tensor& target_rows);

struct AdamSlot {
    Tensor m;
    Tensor v;
    std::uint64_t step = 0;

    bool operator==(const AdamSlot&) const = default;
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<AdamSlot> slots;  // one per network parameter, in params() order

    static AdamState for_params(std::span<Param* const> params, double lr);
    bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update. `slots` aligns with `params`; weight decay
/// adds lambda * theta to the gradient of parameters flagged l2. Throws
/// NumericError on any non-finite gradient before touching parameters.
void adam_step(std::span<Param* const> params, std::span<const Tensor> grads, std::span<AdamSlot> slots,
               const AdamState& config, double weight_decay);

}  // namespace xsa
