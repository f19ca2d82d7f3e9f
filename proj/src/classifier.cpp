#include "xsadapt/classifier.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "xsadapt/errors.hpp"
#include "xsadapt/log.hpp"

namespace xsa {

using nlohmann::json;

std::string to_string(Architecture a) {
    switch (a) {
        case Architecture::tpn: return "tpn";
        case Architecture::double_stream: return "double_stream";
        case Architecture::mlp: return "mlp";
    }
    return "unknown";
}

Architecture architecture_from_string(const std::string& name) {
    if (name == "tpn") return Architecture::tpn;
    if (name == "double_stream") return Architecture::double_stream;
    if (name == "mlp") return Architecture::mlp;
    throw ConfigError("unknown architecture '" + name + "'");
}

namespace {

LayerSpec dense(std::size_t in, std::size_t out) { return LayerSpec{.kind = LayerKind::dense, .in = in, .out = out}; }
LayerSpec relu() { return LayerSpec{.kind = LayerKind::relu}; }
LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw) {
    return LayerSpec{.kind = LayerKind::conv2d, .in = in, .out = out, .kernel_h = kh, .kernel_w = kw,
                     .stride_h = sh, .stride_w = sw};
}
LayerSpec batchnorm(std::size_t ch) { return LayerSpec{.kind = LayerKind::batchnorm, .in = ch}; }

// One stream of the double-stream net: [1, L, Cs] -> flattened features.
std::vector<LayerSpec> imu_stream() {
    std::vector<LayerSpec> s{conv2d(1, 32, 3, 1, 1, 1),  relu(), batchnorm(32),
                             conv2d(32, 64, 6, 3, 3, 3), relu(), batchnorm(64)};
    LayerSpec branches{.kind = LayerKind::branch_concat};
    branches.children = {{conv2d(64, 64, 6, 1, 1, 1), relu(), batchnorm(64)},
                         {conv2d(64, 64, 3, 3, 1, 1), relu(), batchnorm(64)}};
    s.push_back(branches);
    return s;
}

void validate(const ArchitectureConfig& c) {
    if (c.channels == 0 || c.length == 0) throw ConfigError("architecture: input shape must be positive");
    if (c.classes < 2) throw ConfigError("architecture: need at least 2 classes");
    if (c.name == Architecture::mlp && c.hidden.empty()) throw ConfigError("mlp: need at least one hidden layer");
}

}  // namespace

Model build(const ArchitectureConfig& config, std::uint64_t seed) {
    validate(config);
    Model model;
    model.arch = config;
    model.seed = seed;
    Network& net = model.net = Network(Shape{config.channels, config.length});
    const std::size_t k = config.classes;
    switch (config.name) {
        case Architecture::tpn: {
            const std::size_t maps[] = {32, 64, 96};
            const std::size_t kernels[] = {24, 16, 8};
            std::size_t in = config.channels;
            for (int i = 0; i < 3; ++i) {
                net.add(LayerSpec{.kind = LayerKind::conv1d, .in = in, .out = maps[i], .kernel_w = kernels[i],
                                  .stride_w = 1, .l2 = true});
                net.add(relu());
                net.add(LayerSpec{.kind = LayerKind::dropout, .rate = config.dropout});
                in = maps[i];
            }
            net.add(LayerSpec{.kind = LayerKind::global_max_pool_1d});
            net.set_frozen_prefix(net.layer_count());
            net.add(dense(96, 1024));
            net.add(relu());
            net.add(dense(1024, 32));
            net.add(relu());
            net.set_feature_layer(net.layer_count());
            net.add(dense(32, k));
            break;
        }
        case Architecture::double_stream: {
            if (config.streams == 0 || config.channels % config.streams != 0) {
                throw ConfigError("double_stream: channel count must divide evenly into streams");
            }
            LayerSpec split{.kind = LayerKind::stream_split, .streams = config.streams};
            for (std::size_t s = 0; s < config.streams; ++s) split.children.push_back(imu_stream());
            net.add(split);
            net.set_frozen_prefix(net.layer_count());
            net.add(dense(shape_size(net.output_shape()), 32));
            net.add(relu());
            net.set_feature_layer(net.layer_count());
            net.add(dense(32, k));
            break;
        }
        case Architecture::mlp: {
            net.add(LayerSpec{.kind = LayerKind::flatten});
            std::size_t in = config.channels * config.length;
            for (std::size_t i = 0; i < config.hidden.size(); ++i) {
                // Every hidden layer but the feature layer belongs to the shared stack.
                if (i + 1 == config.hidden.size()) net.set_frozen_prefix(net.layer_count());
                net.add(dense(in, config.hidden[i]));
                net.add(relu());
                in = config.hidden[i];
            }
            net.set_feature_layer(net.layer_count());
            net.add(dense(in, k));
            break;
        }
    }
    net.add(LayerSpec{.kind = LayerKind::softmax});
    net.init(seed);
    model.adam = AdamState::for_params(net.params(), 1e-3);
    return model;
}

std::size_t expected_parameter_count(const ArchitectureConfig& c) {
    validate(c);
    const std::size_t k = c.classes;
    switch (c.name) {
        case Architecture::tpn: {
            std::size_t n = c.channels * 32 * 24 + 32;
            n += 32 * 64 * 16 + 64;
            n += 64 * 96 * 8 + 96;
            n += 96 * 1024 + 1024 + 1024 * 32 + 32 + 32 * k + k;
            return n;
        }
        case Architecture::double_stream: {
            const std::size_t cs = c.channels / c.streams;
            if (c.length < 3 || cs < 1) throw ConfigError("double_stream: input too small");
            const std::size_t h1 = c.length - 2, w1 = cs;
            if (h1 < 6 || w1 < 3) throw ConfigError("double_stream: input too small");
            const std::size_t h2 = (h1 - 6) / 3 + 1, w2 = (w1 - 3) / 3 + 1;
            if (h2 < 6 || w2 < 3) throw ConfigError("double_stream: input too small");
            const std::size_t flat_a = 64 * (h2 - 5) * w2, flat_b = 64 * (h2 - 2) * (w2 - 2);
            std::size_t per_stream = (1 * 32 * 3 + 32) + 2 * 32;
            per_stream += (32 * 64 * 18 + 64) + 2 * 64;
            per_stream += (64 * 64 * 6 + 64) + 2 * 64;
            per_stream += (64 * 64 * 9 + 64) + 2 * 64;
            const std::size_t flat = c.streams * (flat_a + flat_b);
            return c.streams * per_stream + flat * 32 + 32 + 32 * k + k;
        }
        case Architecture::mlp: {
            std::size_t n = 0, in = c.channels * c.length;
            for (std::size_t h : c.hidden) {
                n += in * h + h;
                in = h;
            }
            return n + in * k + k;
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> class_coverage_warnings(std::span<const int> labels, std::size_t classes, const char* who) {
    std::vector<std::size_t> counts(classes, 0);
    for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
    std::vector<std::string> out;
    for (std::size_t k = 0; k < classes; ++k) {
        if (counts[k] == 0) {
            out.push_back(std::string(who) + ": class " + std::to_string(k) + " absent from training data");
            log_warn(out.back());
        }
    }
    return out;
}

// Minibatch Adam loop over rows of `inputs` starting at layer `first`.
std::vector<double> train_loop(Model& model, const Tensor& inputs, std::span<const int> labels, std::size_t first,
                               const TrainConfig& cfg) {
    Network& net = model.net;
    std::vector<Param*> params = net.params(first);
    const std::size_t slot0 = net.param_index(first);
    auto slots = std::span(model.adam.slots).subspan(slot0, params.size());
    const double decay = model.arch.l2;
    const std::size_t n = inputs.dim(0);
    const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
    std::vector<std::size_t> order(n);
    std::vector<double> curve;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, "epoch", epoch));
        rng.shuffle(order.begin(), order.end());
        double total = 0.0;
        for (std::size_t b0 = 0, bi = 0; b0 < n; b0 += batch, ++bi) {
            const std::size_t b1 = std::min(n, b0 + batch);
            std::span<const std::size_t> rows(order.data() + b0, b1 - b0);
            const Tensor x = inputs.take_rows(rows);
            std::vector<int> y(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) y[i] = labels[rows[i]];
            const Trace trace = net.forward(x, Mode::train, derive_seed(cfg.seed, "batch", (epoch << 32) | bi), first);
            const LossResult loss = cross_entropy(trace.output(), y);
            const Gradients grads = net.backward(trace, loss.grad_logits, first);
            adam_step(params, grads, slots, model.adam, decay);
            total += loss.loss * static_cast<double>(rows.size());
        }
        curve.push_back(n ? total / static_cast<double>(n) : 0.0);
    }
    return curve;
}

}  // namespace

TrainResult pretrain(Model& model, std::span<const Window> windows, const TrainConfig& cfg) {
    TrainResult res;
    if (cfg.epochs == 0) return res;
    if (windows.empty()) throw DataError("pretrain: no training windows");
    std::vector<int> labels;
    labels.reserve(windows.size());
    for (const auto& w : windows) labels.push_back(w.label);
    res.warnings = class_coverage_warnings(labels, model.arch.classes, "pretrain");
    model.adam = AdamState::for_params(model.net.params(), cfg.lr);
    const Tensor x = stack_windows(windows);
    res.loss_curve = train_loop(model, x, labels, 0, cfg);
    return res;
}

TrainResult fine_tune(Model& model, std::span<const Window> windows, std::span<const TrainingSample> pool,
                      const TrainConfig& cfg) {
    TrainResult res;
    if (pool.empty()) throw DataError("fine_tune: empty labeled pool");
    if (cfg.epochs == 0) return res;
    std::vector<std::size_t> idx;
    std::vector<int> labels;
    for (const auto& s : pool) {
        if (s.index >= windows.size()) throw DataError("fine_tune: pool index out of range");
        idx.push_back(s.index);
        labels.push_back(s.label);
    }
    res.warnings = class_coverage_warnings(labels, model.arch.classes, "fine_tune");
    Network& net = model.net;
    const std::size_t first = net.frozen_prefix();
    // Fresh optimiser moments for the head only; frozen slots are not touched.
    const std::size_t slot0 = net.param_index(first);
    for (std::size_t i = slot0; i < model.adam.slots.size(); ++i) {
        auto& s = model.adam.slots[i];
        s.m.fill(0.0);
        s.v.fill(0.0);
        s.step = 0;
    }
    model.adam.lr = cfg.lr;
    const Tensor features = net.forward_range(stack_windows(windows, idx), 0, first);
    res.loss_curve = train_loop(model, features, labels, first, cfg);
    return res;
}

std::vector<Prediction> predict(const Model& model, std::span<const Window> windows, std::size_t batch_size) {
    std::vector<std::size_t> idx(windows.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return predict(model, windows, idx, batch_size);
}

std::vector<Prediction> predict(const Model& model, std::span<const Window> windows,
                                std::span<const std::size_t> indices, std::size_t batch_size) {
    const Network& net = model.net;
    const std::size_t tap = net.feature_layer();
    std::vector<Prediction> out;
    out.reserve(indices.size());
    batch_size = std::max<std::size_t>(1, batch_size);
    for (std::size_t b0 = 0; b0 < indices.size(); b0 += batch_size) {
        const std::size_t b1 = std::min(indices.size(), b0 + batch_size);
        const Tensor x = stack_windows(windows, indices.subspan(b0, b1 - b0));
        const Tensor feats = net.forward_range(x, 0, tap);
        const Tensor probs = net.forward_range(feats, tap, net.layer_count());
        for (std::size_t r = 0; r < b1 - b0; ++r) {
            Prediction p;
            p.probabilities.assign(probs.row(r), probs.row(r) + probs.row_size());
            p.features.assign(feats.row(r), feats.row(r) + feats.row_size());
            const auto it = std::max_element(p.probabilities.begin(), p.probabilities.end());
            p.confidence = *it;
            p.label = static_cast<int>(it - p.probabilities.begin());
            out.push_back(std::move(p));
        }
    }
    return out;
}

double accuracy(std::span<const Prediction> predictions, std::span<const Window> windows) {
    if (predictions.size() != windows.size()) throw DimensionError("accuracy: size mismatch");
    if (windows.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < windows.size(); ++i) hit += predictions[i].label == windows[i].label;
    return 100.0 * static_cast<double>(hit) / static_cast<double>(windows.size());
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointFormat = "xsadapt-checkpoint";
constexpr int kCheckpointVersion = 1;

json tensor_json(const Tensor& t) { return json{{"shape", t.shape}, {"data", t.data}}; }

Tensor tensor_from_json(const json& j) {
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

json arch_json(const ArchitectureConfig& a) {
    return json{{"name", to_string(a.name)}, {"channels", a.channels}, {"length", a.length},
                {"classes", a.classes},      {"hidden", a.hidden},     {"dropout", a.dropout},
                {"l2", a.l2},                {"streams", a.streams}};
}

ArchitectureConfig arch_from_json(const json& j) {
    ArchitectureConfig a;
    a.name = architecture_from_string(j.at("name").get<std::string>());
    a.channels = j.at("channels").get<std::size_t>();
    a.length = j.at("length").get<std::size_t>();
    a.classes = j.at("classes").get<std::size_t>();
    a.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    a.dropout = j.at("dropout").get<double>();
    a.l2 = j.at("l2").get<double>();
    a.streams = j.at("streams").get<std::size_t>();
    return a;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["seed"] = model.seed;
    j["arch"] = arch_json(model.arch);
    j["layers"] = model.net.specs();
    j["params"] = json::array();
    for (const auto* p : model.net.params()) {
        json e = tensor_json(p->value);
        e["name"] = p->name;
        j["params"].push_back(e);
    }
    j["buffers"] = json::array();
    for (const auto* b : model.net.buffers()) j["buffers"].push_back(tensor_json(*b));
    json adam{{"lr", model.adam.lr}, {"beta1", model.adam.beta1}, {"beta2", model.adam.beta2},
              {"eps", model.adam.eps}, {"slots", json::array()}};
    for (const auto& s : model.adam.slots)
        adam["slots"].push_back(json{{"step", s.step}, {"m", tensor_json(s.m)}, {"v", tensor_json(s.v)}});
    j["adam"] = adam;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << j.dump();
    if (!out) throw IoError("write failure on " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path.string() + ": " + e.what());
    }
    if (j.value("format", "") != kCheckpointFormat) throw DataError("not a checkpoint file: " + path.string());
    if (j.value("version", 0) != kCheckpointVersion) throw DataError("unsupported checkpoint version");
    Model model = build(arch_from_json(j.at("arch")), j.at("seed").get<std::uint64_t>());
    if (j.at("layers").get<std::vector<LayerSpec>>() != model.net.specs()) {
        throw DataError("checkpoint layer specs do not match the architecture");
    }
    auto params = model.net.params();
    const auto& jp = j.at("params");
    if (jp.size() != params.size()) throw DataError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = tensor_from_json(jp[i]);
        if (t.shape != params[i]->value.shape) throw DataError("checkpoint parameter shape mismatch");
        params[i]->value = std::move(t);
    }
    auto buffers = model.net.buffers();
    const auto& jb = j.at("buffers");
    if (jb.size() != buffers.size()) throw DataError("checkpoint buffer count mismatch");
    for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i] = tensor_from_json(jb[i]);
    const auto& ja = j.at("adam");
    model.adam.lr = ja.at("lr").get<double>();
    model.adam.beta1 = ja.at("beta1").get<double>();
    model.adam.beta2 = ja.at("beta2").get<double>();
    model.adam.eps = ja.at("eps").get<double>();
    model.adam.slots.clear();
    for (const auto& s : ja.at("slots"))
        model.adam.slots.push_back(
            AdamSlot{tensor_from_json(s.at("m")), tensor_from_json(s.at("v")), s.at("step").get<std::uint64_t>()});
    if (model.adam.slots.size() != params.size()) throw DataError("checkpoint optimiser state mismatch");
    return model;
}

}  // namespace xsa
