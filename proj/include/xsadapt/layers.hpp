#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "xsadapt/rng.hpp"
#include "xsadapt/tensor.hpp"

namespace xsa {

enum class Mode { train, eval };

enum class LayerKind {
    conv1d,
    conv2d,
    dense,
    relu,
    dropout,
    batchnorm,
    global_max_pool_1d,
    softmax,
    flatten,
    stream_split,   // split channels into equal groups, run one sub-stack per group
    branch_concat,  // run several sub-stacks on the same input
};

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// Declarative description of a layer. Only the fields relevant to `kind`
/// are meaningful; composite kinds carry their sub-stacks in `children`.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    double rate = 0.0;
    bool l2 = false;
    std::size_t streams = 0;
    std::vector<std::vector<LayerSpec>> children;

    bool operator==(const LayerSpec&) const = default;
};

void to_json(nlohmann::json& j, const LayerSpec& s);
void from_json(const nlohmann::json& j, LayerSpec& s);

struct Param {
    std::string name;
    Tensor value;
    bool l2 = false;  // participates in weight decay
};

struct LayerCache;

/// Activations of a contiguous run of layers: acts[0] is the input of the
/// first layer, acts[i + 1] the output of layer i.
struct SubTrace {
    std::vector<Tensor> acts;
    std::vector<LayerCache> caches;
};

struct LayerCache {
    std::vector<double> values;
    std::vector<std::uint32_t> index;
    std::vector<SubTrace> children;
};

class Layer {
public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    virtual LayerSpec spec() const = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;

    /// Per-sample output shape for a per-sample input shape. Throws
    /// DimensionError when the input cannot pass through this layer.
    virtual Shape output_shape(const Shape& in) const = 0;

    /// `cache` may be null in eval mode. Batchnorm updates its running
    /// statistics in train mode only.
    virtual Tensor forward(const Tensor& x, Mode mode, Rng& rng, LayerCache* cache) = 0;

    /// Propagates `gy` (gradient w.r.t. this layer's output). Parameter
    /// gradients are accumulated into `grads` (aligned with params()) unless
    /// it is empty. Returns the input gradient when `need_input_grad`.
    virtual Tensor backward(const Tensor& x, const Tensor& y, const Tensor& gy, const LayerCache& cache,
                            std::span<Tensor> grads, bool need_input_grad) const = 0;

    virtual std::vector<Param*> params() { return {}; }
    virtual std::vector<const Param*> params() const { return {}; }
    /// Non-trainable state (batchnorm running statistics).
    virtual std::vector<Tensor*> buffers() { return {}; }
    virtual std::vector<const Tensor*> buffers() const { return {}; }
    virtual void init(Rng& /*rng*/) {}
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec);

/// Runs a layer sequence forward. When `trace` is non-null it receives
/// every activation and cache (needed for backward).
Tensor run_forward(std::span<const std::unique_ptr<Layer>> layers, const Tensor& x, Mode mode, Rng& rng,
                   SubTrace* trace);

/// Backward through a sequence recorded in `trace`; `grads` is the
/// concatenation of every layer's parameter gradients in order.
Tensor run_backward(std::span<const std::unique_ptr<Layer>> layers, const SubTrace& trace, const Tensor& gy,
                    std::span<Tensor> grads, bool need_input_grad);

Shape sequence_output_shape(std::span<const std::unique_ptr<Layer>> layers, Shape in);

}  // namespace xsa
