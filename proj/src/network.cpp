#include "xsadapt/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xsadapt/errors.hpp"
#include "xsadapt/log.hpp"

namespace xsa {

Network::Network(Shape input_shape) : input_shape_(std::move(input_shape)) {}

Network::Network(const Network& other)
    : input_shape_(other.input_shape_),
      shapes_(other.shapes_),
      frozen_prefix_(other.frozen_prefix_),
      feature_layer_(other.feature_layer_) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
    if (this != &other) {
        Network tmp(other);
        *this = std::move(tmp);
    }
    return *this;
}

void Network::add(const LayerSpec& spec) {
    auto layer = make_layer(spec);
    const Shape in = layers_.empty() ? input_shape_ : output_shape();
    try {
        (void)layer->output_shape(in);
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("layer ") + std::to_string(layers_.size()) + " (" + to_string(spec.kind) +
                          "): " + e.what());
    }
    shapes_.push_back(in);
    layers_.push_back(std::move(layer));
}

Shape Network::output_shape() const {
    if (layers_.empty()) return input_shape_;
    return layers_.back()->output_shape(shapes_.back());
}

void Network::init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "init"));
    for (auto& l : layers_) l->init(rng);
}

std::vector<LayerSpec> Network::specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(l->spec());
    return out;
}

void Network::set_frozen_prefix(std::size_t n) {
    if (n > layers_.size()) throw ConfigError("frozen prefix exceeds layer count");
    frozen_prefix_ = n;
}

void Network::set_feature_layer(std::size_t n) {
    if (n > layers_.size()) throw ConfigError("feature layer exceeds layer count");
    feature_layer_ = n;
}

Trace Network::forward(const Tensor& x, Mode mode, std::uint64_t seed, std::size_t first) {
    if (first > layers_.size()) throw DimensionError("forward: start layer out of range");
    Shape expected{x.dim(0)};
    const Shape& per = first < shapes_.size() ? shapes_[first] : output_shape();
    expected.insert(expected.end(), per.begin(), per.end());
    if (x.shape != expected) {
        throw DimensionError("forward: batch shape " + shape_str(x.shape) + " does not match expected " +
                             shape_str(expected));
    }
    Trace trace;
    trace.mode = mode;
    trace.first_layer = first;
    Rng rng(derive_seed(seed, "forward"));
    run_forward(std::span(layers_).subspan(first), x, mode, rng, &trace.sub);
    return trace;
}

Tensor Network::forward_range(const Tensor& x, std::size_t first, std::size_t last) const {
    if (first > last || last > layers_.size()) throw DimensionError("forward_range: bad layer range");
    Rng rng(0);
    Tensor cur = x;
    for (std::size_t i = first; i < last; ++i) {
        // Eval mode leaves every layer's state untouched.
        cur = const_cast<Layer&>(*layers_[i]).forward(cur, Mode::eval, rng, nullptr);
    }
    return cur;
}

Gradients Network::backward(const Trace& trace, const Tensor& grad_logits, std::size_t stop) const {
    if (layers_.empty() || layers_.back()->kind() != LayerKind::softmax) {
        throw ContractError("backward from logits requires a trailing softmax layer");
    }
    return backward_impl(trace, grad_logits, layers_.size() - 1, stop);
}

Gradients Network::backward_from_output(const Trace& trace, const Tensor& grad_probs, std::size_t stop) const {
    return backward_impl(trace, grad_probs, layers_.size(), stop);
}

Gradients Network::backward_impl(const Trace& trace, const Tensor& g0, std::size_t from_layer,
                                 std::size_t stop) const {
    if (trace.mode != Mode::train) throw ContractError("backward requires activations from a train-mode forward");
    if (trace.sub.acts.size() != layers_.size() - trace.first_layer + 1) {
        throw ContractError("backward: trace does not match this network");
    }
    const std::size_t begin = std::max(stop, trace.first_layer);
    const std::size_t base = param_index(begin);
    Gradients grads;
    for (const Param* p : params(begin)) grads.emplace_back(p->value.shape);
    Tensor g = g0;
    for (std::size_t i = from_layer; i-- > begin;) {
        const Layer& layer = *layers_[i];
        const std::size_t off = param_index(i) - base;
        const std::size_t np = layer.params().size();
        const std::size_t local = i - trace.first_layer;
        g = layer.backward(trace.sub.acts[local], trace.sub.acts[local + 1], g, trace.sub.caches[local],
                           std::span(grads).subspan(off, np), i > begin);
    }
    return grads;
}

std::vector<Param*> Network::params(std::size_t from) {
    std::vector<Param*> out;
    for (std::size_t i = from; i < layers_.size(); ++i)
        for (auto* p : layers_[i]->params()) out.push_back(p);
    return out;
}

std::vector<const Param*> Network::params(std::size_t from) const {
    std::vector<const Param*> out;
    for (std::size_t i = from; i < layers_.size(); ++i)
        for (const auto* p : static_cast<const Layer&>(*layers_[i]).params()) out.push_back(p);
    return out;
}

std::size_t Network::param_index(std::size_t layer) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < layer && i < layers_.size(); ++i) n += static_cast<const Layer&>(*layers_[i]).params().size();
    return n;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : params()) n += p->value.size();
    return n;
}

std::vector<Tensor*> Network::buffers() {
    std::vector<Tensor*> out;
    for (auto& l : layers_)
        for (auto* b : l->buffers()) out.push_back(b);
    return out;
}

std::vector<const Tensor*> Network::buffers() const {
    std::vector<const Tensor*> out;
    for (const auto& l : layers_)
        for (const auto* b : static_cast<const Layer&>(*l).buffers()) out.push_back(b);
    return out;
}

std::uint64_t Network::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* p : params()) h = hash_tensor(p->value, h);
    for (const auto* b : buffers()) h = hash_tensor(*b, h);
    return h;
}

std::uint64_t Network::feature_stack_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < frozen_prefix_; ++i) {
        const Layer& l = *layers_[i];
        for (const auto* p : l.params()) h = hash_tensor(p->value, h);
        for (const auto* b : l.buffers()) h = hash_tensor(*b, h);
    }
    return h;
}

// ---------------------------------------------------------------------------

namespace {
constexpr double kProbClamp = 1e-12;
}

LossResult cross_entropy(const Tensor& probs, std::span<const int> targets) {
    if (probs.rank() != 2 || probs.dim(0) != targets.size()) {
        throw DimensionError("cross_entropy: probabilities " + shape_str(probs.shape) + " vs " +
                             std::to_string(targets.size()) + " targets");
    }
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    LossResult res;
    res.grad_logits = probs;
    if (n == 0) return res;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        const int t = targets[r];
        if (t < 0 || static_cast<std::size_t>(t) >= k) throw DataError("cross_entropy: target out of range");
        double p = probs.row(r)[t];
        if (p < kProbClamp) {
            p = kProbClamp;
            ++res.clamped;
        }
        res.loss -= std::log(p);
        res.grad_logits.row(r)[t] -= 1.0;
    }
    for (auto& g : res.grad_logits.data) g *= inv_n;
    res.loss *= inv_n;
    if (res.clamped > 0) log_debug("cross_entropy: clamped " + std::to_string(res.clamped) + " probabilities");
    return res;
}

LossResult cross_entropy(const Tensor& probs, const Tensor& target_rows) {
    if (probs.shape != target_rows.shape || probs.rank() != 2) {
        throw DimensionError("cross_entropy: target rows must match probabilities");
    }
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    LossResult res;
    res.grad_logits = Tensor(probs.shape);
    if (n == 0) return res;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
            const double y = target_rows.row(r)[j];
            double p = probs.row(r)[j];
            if (y != 0.0) {
                if (p < kProbClamp) {
                    p = kProbClamp;
                    ++res.clamped;
                }
                res.loss -= y * std::log(p);
            }
            res.grad_logits.row(r)[j] = (probs.row(r)[j] - y) * inv_n;
        }
    }
    res.loss *= inv_n;
    return res;
}

AdamState AdamState::for_params(std::span<Param* const> params, double lr) {
    AdamState s;
    s.lr = lr;
    for (const Param* p : params) s.slots.push_back(AdamSlot{Tensor(p->value.shape), Tensor(p->value.shape), 0});
    return s;
}

void adam_step(std::span<Param* const> params, std::span<const Tensor> grads, std::span<AdamSlot> slots,
               const AdamState& cfg, double weight_decay) {
    if (params.size() != grads.size() || params.size() != slots.size()) {
        throw DimensionError("adam_step: parameter, gradient and slot counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].shape != params[i]->value.shape || slots[i].m.shape != params[i]->value.shape) {
            throw DimensionError("adam_step: shape mismatch for parameter " + params[i]->name);
        }
        for (double g : grads[i].data) {
            if (!std::isfinite(g)) {
                throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i) + " (" +
                                   params[i]->name + ", shape " + shape_str(params[i]->value.shape) + ")");
            }
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        AdamSlot& s = slots[i];
        ++s.step;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
        const double decay = p.l2 ? weight_decay : 0.0;
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = grads[i][j] + decay * p.value[j];
            s.m[j] = cfg.beta1 * s.m[j] + (1.0 - cfg.beta1) * g;
            s.v[j] = cfg.beta2 * s.v[j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = s.m[j] / bc1;
            const double vhat = s.v[j] / bc2;
            p.value[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace xsa
