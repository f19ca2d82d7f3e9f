#include "xsadapt/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "xsadapt/errors.hpp"
#include "xsadapt/rng.hpp"

namespace xsa {

void SensorRecording::validate() const {
    if (sample_rate_hz <= 0.0) throw DataError(subject_id + ": sample rate must be positive");
    if (num_classes < 1) throw DataError(subject_id + ": class count must be positive");
    if (channel_names.size() != channels.size()) throw DataError(subject_id + ": channel names/streams differ");
    const std::size_t t = timestamps_ms.size();
    if (labels.size() != t) throw DataError(subject_id + ": labels and timestamps differ in length");
    for (const auto& c : channels) {
        if (c.size() != t) throw DataError(subject_id + ": channel length differs from timestamps");
    }
    for (int l : labels) {
        if (l < 0 || l >= num_classes) {
            throw DataError(subject_id + ": label " + std::to_string(l) + " outside [0, " +
                            std::to_string(num_classes) + ")");
        }
    }
    for (std::size_t i = 1; i < t; ++i) {
        if (timestamps_ms[i] < timestamps_ms[i - 1]) throw DataError(subject_id + ": timestamps not monotone");
    }
    if (t >= 2) {
        const double mean_delta = (timestamps_ms.back() - timestamps_ms.front()) / static_cast<double>(t - 1);
        const double nominal = 1000.0 / sample_rate_hz;
        if (std::abs(mean_delta - nominal) > 0.01 * nominal) {
            throw DataError(subject_id + ": sample rate inconsistent with timestamp spacing");
        }
    }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    for (auto& f : out) {
        while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
        while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
    }
    return out;
}

double parse_double(std::string_view s, std::size_t line_no) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw DataError("line " + std::to_string(line_no) + ": cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

int parse_int(std::string_view s, std::size_t line_no) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw DataError("line " + std::to_string(line_no) + ": cannot parse label '" + std::string(s) + "'");
    }
    return v;
}

double median_delta(const std::vector<double>& ts) {
    std::vector<double> d;
    d.reserve(ts.size());
    for (std::size_t i = 1; i < ts.size(); ++i) d.push_back(ts[i] - ts[i - 1]);
    if (d.empty()) return 0.0;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
    return d[d.size() / 2];
}

}  // namespace

std::vector<SensorRecording> load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw SchemaError(path.string() + ": empty file");
    if (header.size() >= 3 && static_cast<unsigned char>(header[0]) == 0xEF) header.erase(0, 3);  // UTF-8 BOM
    const auto cols = split_fields(header);
    auto find_col = [&](std::string_view name) -> std::size_t {
        const auto it = std::find(cols.begin(), cols.end(), name);
        if (it == cols.end()) throw SchemaError(path.string() + ": missing column '" + std::string(name) + "'");
        return static_cast<std::size_t>(it - cols.begin());
    };
    const std::size_t c_subject = find_col("subject_id");
    const std::size_t c_time = find_col("timestamp_ms");
    const std::size_t c_label = find_col("label");
    std::vector<std::string> channel_names = schema.channels;
    if (channel_names.empty()) {
        for (std::size_t c = 0;; ++c) {
            const std::string name = "ch_" + std::to_string(c);
            if (std::find(cols.begin(), cols.end(), name) == cols.end()) break;
            channel_names.push_back(name);
        }
        if (channel_names.empty()) throw SchemaError(path.string() + ": no ch_* columns");
    }
    std::vector<std::size_t> c_channels;
    for (const auto& name : channel_names) c_channels.push_back(find_col(name));

    std::map<std::string, SensorRecording> by_subject;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = split_fields(line);
        if (f.size() != cols.size()) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(cols.size()) + " fields, got " + std::to_string(f.size()));
        }
        const std::string subject(f[c_subject]);
        auto& rec = by_subject[subject];
        if (rec.subject_id.empty()) {
            rec.subject_id = subject;
            rec.channel_names = channel_names;
            rec.channels.assign(channel_names.size(), {});
            rec.num_classes = schema.num_classes;
        }
        const double ts = parse_double(f[c_time], line_no);
        if (!rec.timestamps_ms.empty() && ts < rec.timestamps_ms.back()) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": timestamps of subject " + subject +
                            " are not monotone");
        }
        const int label = parse_int(f[c_label], line_no);
        if (label < 0 || (schema.num_classes > 0 && label >= schema.num_classes)) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": label " + std::to_string(label) +
                            " outside [0, " + std::to_string(schema.num_classes) + ")");
        }
        rec.timestamps_ms.push_back(ts);
        rec.labels.push_back(label);
        for (std::size_t c = 0; c < c_channels.size(); ++c)
            rec.channels[c].push_back(parse_double(f[c_channels[c]], line_no));
    }
    std::vector<SensorRecording> out;
    for (auto& [id, rec] : by_subject) {
        if (rec.num_classes <= 0) rec.num_classes = *std::max_element(rec.labels.begin(), rec.labels.end()) + 1;
        const double d = median_delta(rec.timestamps_ms);
        rec.sample_rate_hz = d > 0.0 ? 1000.0 / d : 1.0;
        rec.validate();
        out.push_back(std::move(rec));
    }
    return out;
}

void write_csv(const std::filesystem::path& path, std::span<const SensorRecording> recordings) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    if (recordings.empty()) throw DataError("write_csv: no recordings");
    out << "subject_id,timestamp_ms,label";
    for (std::size_t c = 0; c < recordings.front().channel_count(); ++c) out << ",ch_" << c;
    out << '\n';
    out.precision(17);
    for (const auto& rec : recordings) {
        if (rec.channel_count() != recordings.front().channel_count()) {
            throw DataError("write_csv: recordings disagree on channel count");
        }
        for (std::size_t t = 0; t < rec.length(); ++t) {
            out << rec.subject_id << ',' << rec.timestamps_ms[t] << ',' << rec.labels[t];
            for (const auto& ch : rec.channels) out << ',' << ch[t];
            out << '\n';
        }
    }
    if (!out) throw IoError("write failure on " + path.string());
}

// ---------------------------------------------------------------------------
// Windowing

std::size_t window_steps(double window_ms, double rate_hz) {
    return static_cast<std::size_t>(std::llround(window_ms * rate_hz / 1000.0));
}

int majority_label(std::span<const int> labels, std::size_t midpoint) {
    std::map<int, std::size_t> counts;
    for (int l : labels) ++counts[l];
    std::size_t best = 0;
    for (const auto& [l, n] : counts) best = std::max(best, n);
    const int mid = labels[midpoint];
    if (counts[mid] == best) return mid;
    for (const auto& [l, n] : counts)
        if (n == best) return l;
    return mid;
}

std::vector<Window> segment_windows(const SensorRecording& rec, double window_ms, double stride_ms) {
    if (!(stride_ms > 0.0) || window_ms < stride_ms) throw ConfigError("segment_windows: need window >= stride > 0");
    const std::size_t len = window_steps(window_ms, rec.sample_rate_hz);
    const std::size_t stride = std::max<std::size_t>(1, window_steps(stride_ms, rec.sample_rate_hz));
    const std::size_t total = rec.length();
    if (len == 0 || total < len) {
        throw DataError(rec.subject_id + ": recording of " + std::to_string(total) + " steps is shorter than one " +
                        std::to_string(len) + "-step window");
    }
    const std::size_t count = (total - len) / stride + 1;
    std::vector<Window> out;
    out.reserve(count);
    const std::size_t c = rec.channel_count();
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t start = w * stride;
        Window win;
        win.subject_id = rec.subject_id;
        win.start = start;
        win.timestamp_ms = rec.timestamps_ms[start];
        win.channels = c;
        win.length = len;
        win.values.resize(c * len);
        for (std::size_t ch = 0; ch < c; ++ch)
            std::copy_n(rec.channels[ch].begin() + static_cast<std::ptrdiff_t>(start), len,
                        win.values.begin() + static_cast<std::ptrdiff_t>(ch * len));
        win.label = majority_label(std::span(rec.labels).subspan(start, len), len / 2);
        out.push_back(std::move(win));
    }
    return out;
}

SensorRecording resample(const SensorRecording& rec, double target_rate_hz) {
    if (!(target_rate_hz > 0.0)) throw ConfigError("resample: target rate must be positive");
    if (rec.length() == 0) throw DataError("resample: empty recording");
    SensorRecording out;
    out.subject_id = rec.subject_id;
    out.sample_rate_hz = target_rate_hz;
    out.channel_names = rec.channel_names;
    out.num_classes = rec.num_classes;
    out.channels.assign(rec.channel_count(), {});
    const double t0 = rec.timestamps_ms.front(), t1 = rec.timestamps_ms.back();
    const double step = 1000.0 / target_rate_hz;
    const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / step + 1e-9)) + 1;
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t0 + static_cast<double>(i) * step;
        while (j + 1 < rec.length() && rec.timestamps_ms[j + 1] <= t) ++j;
        const std::size_t k = std::min(j + 1, rec.length() - 1);
        const double ta = rec.timestamps_ms[j], tb = rec.timestamps_ms[k];
        const double a = tb > ta ? (t - ta) / (tb - ta) : 0.0;
        out.timestamps_ms.push_back(t);
        for (std::size_t c = 0; c < rec.channel_count(); ++c)
            out.channels[c].push_back(rec.channels[c][j] + a * (rec.channels[c][k] - rec.channels[c][j]));
        out.labels.push_back(a <= 0.5 ? rec.labels[j] : rec.labels[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits

SubjectWindows window_all(std::span<const SensorRecording> recordings, double window_ms, double stride_ms) {
    SubjectWindows out;
    for (const auto& rec : recordings) {
        auto w = segment_windows(rec, window_ms, stride_ms);
        auto& dst = out[rec.subject_id];
        dst.insert(dst.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return out;
}

LosoSplit loso_split(const SubjectWindows& windows, const SplitSpec& spec) {
    if (windows.size() < 2) throw DataError("loso_split: at least two subjects required");
    const auto target = windows.find(spec.target_subject);
    if (target == windows.end()) throw LookupError("loso_split: unknown target subject '" + spec.target_subject + "'");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw ConfigError("loso_split: train fraction must lie in (0, 1)");
    }
    LosoSplit split;
    for (const auto& [id, w] : windows) {
        if (id == spec.target_subject) continue;
        split.pretrain.insert(split.pretrain.end(), w.begin(), w.end());
    }
    Rng rng(derive_seed(spec.seed, "loso_split"));
    const auto& tw = target->second;
    std::size_t begin = 0;
    while (begin < tw.size()) {
        std::size_t end = begin + 1;
        while (end < tw.size() && tw[end].label == tw[begin].label) ++end;
        const std::size_t n = end - begin;
        const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.train_fraction));
        const bool train_first = rng.below(2) == 0;
        const std::size_t cut = train_first ? begin + n_train : end - n_train;
        for (std::size_t i = begin; i < end; ++i) {
            const bool is_train = train_first ? i < cut : i >= cut;
            (is_train ? split.target_train : split.target_test).push_back(tw[i]);
        }
        begin = end;
    }
    return split;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark data

std::vector<SensorRecording> synth_generate(const SynthConfig& cfg) {
    if (cfg.classes < 2) throw ConfigError("synth: need at least 2 classes");
    if (cfg.channels < 1) throw ConfigError("synth: need at least 1 channel");
    if (cfg.subjects < 1) throw ConfigError("synth: need at least 1 subject");
    if (cfg.blocks_per_class < 1) throw ConfigError("synth: need at least 1 block per class");
    if (!(cfg.per_class_seconds > 0.0) || !(cfg.sample_rate_hz > 0.0)) {
        throw ConfigError("synth: durations and rates must be positive");
    }
    if (cfg.shift < 0.0 || cfg.noise < 0.0) throw ConfigError("synth: shift and noise must be non-negative");

    constexpr int kTones = 2;
    const auto k = static_cast<std::size_t>(cfg.classes);
    const auto c = static_cast<std::size_t>(cfg.channels);
    struct Tone {
        double freq, amp, phase;
    };
    // Class prototypes are shared by every subject.
    Rng proto(derive_seed(cfg.seed, "synth/prototypes"));
    std::vector<std::vector<double>> level(k, std::vector<double>(c));
    std::vector<std::vector<std::vector<Tone>>> tones(k, std::vector<std::vector<Tone>>(c));
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t ch = 0; ch < c; ++ch) {
            level[a][ch] = proto.normal();
            for (int t = 0; t < kTones; ++t)
                tones[a][ch].push_back(
                    {proto.uniform(0.5, 5.0), proto.uniform(0.2, 1.0), proto.uniform(0.0, 2.0 * std::numbers::pi)});
        }

    const double dt_ms = 1000.0 / cfg.sample_rate_hz;
    const auto block_steps = static_cast<std::size_t>(
        std::llround(cfg.per_class_seconds * cfg.sample_rate_hz / static_cast<double>(cfg.blocks_per_class)));
    std::vector<SensorRecording> out;
    for (int s = 0; s < cfg.subjects; ++s) {
        Rng rng(derive_seed(cfg.seed, "synth/subject", static_cast<std::uint64_t>(s)));
        std::vector<double> gain(c), offset(c), phase(c);
        for (std::size_t ch = 0; ch < c; ++ch) {
            gain[ch] = std::exp(0.4 * cfg.shift * rng.normal());
            offset[ch] = 0.6 * cfg.shift * rng.normal();
            phase[ch] = cfg.shift * rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
        }
        std::vector<int> order;
        for (int b = 0; b < cfg.blocks_per_class; ++b)
            for (int a = 0; a < cfg.classes; ++a) order.push_back(a);
        rng.shuffle(order.begin(), order.end());

        SensorRecording rec;
        char id[32];
        std::snprintf(id, sizeof id, "S%02d", s + 1);
        rec.subject_id = id;
        rec.sample_rate_hz = cfg.sample_rate_hz;
        rec.num_classes = cfg.classes;
        rec.channels.assign(c, {});
        for (std::size_t ch = 0; ch < c; ++ch) rec.channel_names.push_back("ch_" + std::to_string(ch));
        std::size_t step = 0;
        for (int a : order) {
            for (std::size_t i = 0; i < block_steps; ++i, ++step) {
                const double t = static_cast<double>(step) * dt_ms / 1000.0;
                rec.timestamps_ms.push_back(static_cast<double>(step) * dt_ms);
                rec.labels.push_back(a);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    double v = level[static_cast<std::size_t>(a)][ch];
                    for (const auto& tone : tones[static_cast<std::size_t>(a)][ch])
                        v += tone.amp * std::sin(2.0 * std::numbers::pi * tone.freq * t + tone.phase + phase[ch]);
                    rec.channels[ch].push_back(gain[ch] * v + offset[ch] + cfg.noise * rng.normal());
                }
            }
        }
        rec.validate();
        out.push_back(std::move(rec));
    }
    return out;
}

Tensor stack_windows(std::span<const Window> windows) {
    if (windows.empty()) return Tensor({0, 0, 0});
    const std::size_t c = windows.front().channels, len = windows.front().length;
    Tensor out({windows.size(), c, len});
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].channels != c || windows[i].length != len) throw DimensionError("stack_windows: ragged windows");
        std::copy(windows[i].values.begin(), windows[i].values.end(), out.row(i));
    }
    return out;
}

Tensor stack_windows(std::span<const Window> windows, std::span<const std::size_t> indices) {
    if (indices.empty()) return Tensor({0, windows.empty() ? 0 : windows.front().channels,
                                        windows.empty() ? 0 : windows.front().length});
    const std::size_t c = windows[indices.front()].channels, len = windows[indices.front()].length;
    Tensor out({indices.size(), c, len});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Window& w = windows[indices[i]];
        if (w.channels != c || w.length != len) throw DimensionError("stack_windows: ragged windows");
        std::copy(w.values.begin(), w.values.end(), out.row(i));
    }
    return out;
}

}  // namespace xsa
