#include "xsadapt/settings.hpp"

#include <sstream>

#include "xsadapt/errors.hpp"

namespace xsa {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

namespace {

std::size_t positive(const KeyValueConfig& c, const std::string& key, std::size_t fallback) {
    const auto v = c.get_int(key, static_cast<std::int64_t>(fallback));
    if (v <= 0) throw ConfigError(key + " must be positive");
    return static_cast<std::size_t>(v);
}

std::size_t non_negative(const KeyValueConfig& c, const std::string& key, std::size_t fallback) {
    const auto v = c.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(key + " must be non-negative");
    return static_cast<std::size_t>(v);
}

double positive_double(const KeyValueConfig& c, const std::string& key, double fallback) {
    const double v = c.get_double(key, fallback);
    if (!(v > 0.0)) throw ConfigError(key + " must be positive");
    return v;
}

TrainConfig train_config(const KeyValueConfig& c, const std::string& prefix, const TrainConfig& defaults) {
    TrainConfig t = defaults;
    t.epochs = non_negative(c, prefix + ".epochs", defaults.epochs);
    t.batch_size = positive(c, prefix + ".batch_size", defaults.batch_size);
    t.lr = positive_double(c, prefix + ".lr", defaults.lr);
    return t;
}

}  // namespace

Settings settings_from_config(const KeyValueConfig& c) {
    Settings s;
    try {
        s.seed = c.get_uint("seed", 0);

        s.data_source = c.get("data.source", "synth");
        if (s.data_source == "csv") {
            s.data_path = c.require("data.path");
            s.schema.channels = split_list(c.get("data.channels", ""));
            s.schema.num_classes = static_cast<int>(positive(c, "data.classes", 1));
        } else if (s.data_source != "synth") {
            throw ConfigError("data.source must be synth or csv, got '" + s.data_source + "'");
        }

        SynthConfig& y = s.synth;
        y.classes = static_cast<int>(positive(c, "synth.classes", static_cast<std::size_t>(y.classes)));
        y.subjects = static_cast<int>(positive(c, "synth.subjects", static_cast<std::size_t>(y.subjects)));
        y.channels = static_cast<int>(positive(c, "synth.channels", static_cast<std::size_t>(y.channels)));
        y.per_class_seconds = positive_double(c, "synth.per_class_seconds", y.per_class_seconds);
        y.blocks_per_class =
            static_cast<int>(positive(c, "synth.blocks_per_class", static_cast<std::size_t>(y.blocks_per_class)));
        y.sample_rate_hz = positive_double(c, "synth.sample_rate_hz", y.sample_rate_hz);
        y.shift = c.get_double("synth.shift", y.shift);
        y.noise = c.get_double("synth.noise", y.noise);
        if (y.shift < 0.0 || y.noise < 0.0) throw ConfigError("synth.shift and synth.noise must be non-negative");
        y.seed = c.get_uint("synth.seed", s.seed);

        BenchmarkConfig& b = s.bench;
        b.seed = s.seed;
        b.window_ms = positive_double(c, "window.ms", b.window_ms);
        b.stride_ms = positive_double(c, "window.stride_ms", b.stride_ms);

        b.arch.name = architecture_from_string(c.get("model.arch", "mlp"));
        if (c.has("model.hidden")) {
            b.arch.hidden.clear();
            for (const auto& h : split_list(c.get("model.hidden", ""))) {
                const long v = std::stol(h);
                if (v <= 0) throw ConfigError("model.hidden widths must be positive");
                b.arch.hidden.push_back(static_cast<std::size_t>(v));
            }
        }
        b.arch.dropout = c.get_double("model.dropout", b.arch.dropout);
        if (b.arch.dropout < 0.0 || b.arch.dropout >= 1.0) throw ConfigError("model.dropout must be in [0, 1)");
        b.arch.l2 = c.get_double("model.l2", b.arch.l2);
        b.arch.streams = positive(c, "model.streams", b.arch.streams);

        b.pretrain = train_config(c, "pretrain", b.pretrain);
        b.run.finetune = train_config(c, "finetune", b.run.finetune);

        RunConfig& r = b.run;
        r.variant = variant_from_string(c.get("adapt.variant", to_string(r.variant)));
        r.max_iterations = static_cast<int>(non_negative(c, "adapt.iterations", static_cast<std::size_t>(r.max_iterations)));
        r.base_threshold = c.get_double("adapt.threshold", r.base_threshold);
        if (r.base_threshold < 0.0 || r.base_threshold >= 1.0) throw ConfigError("adapt.threshold must be in [0, 1)");
        r.per_boundary = positive(c, "adapt.per_boundary", r.per_boundary);
        r.selection = selection_order_from_string(c.get("adapt.selection", to_string(r.selection)));
        r.augment.thres_t_s = positive_double(c, "adapt.thres_t_s", r.augment.thres_t_s);
        r.augment.cutoff = positive_double(c, "adapt.cutoff", r.augment.cutoff);
        r.predict_batch = positive(c, "adapt.predict_batch", r.predict_batch);
        s.target = c.get("adapt.target", "");

        if (c.has("benchmark.variants")) {
            b.variants.clear();
            for (const auto& v : split_list(c.get("benchmark.variants", ""))) b.variants.push_back(variant_from_string(v));
        }
        b.fullft = c.get_bool("benchmark.fullft", b.fullft);
        b.jobs = positive(c, "benchmark.jobs", b.jobs);
        b.targets = split_list(c.get("benchmark.targets", ""));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    const auto unused = c.unused_keys();
    if (!unused.empty()) {
        std::string keys;
        for (const auto& k : unused) keys += (keys.empty() ? "" : ", ") + k;
        throw ConfigError("unknown config keys: " + keys);
    }
    return s;
}

std::vector<SensorRecording> load_recordings(const Settings& s) {
    if (s.data_source == "csv") return load_csv(s.data_path, s.schema);
    return synth_generate(s.synth);
}

}  // namespace xsa
