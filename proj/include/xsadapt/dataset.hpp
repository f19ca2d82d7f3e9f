#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xsadapt/tensor.hpp"

namespace xsa {

/// One subject's multichannel recording with per-timestep ground truth.
struct SensorRecording {
    std::string subject_id;
    double sample_rate_hz = 0.0;
    std::vector<std::string> channel_names;
    std::vector<std::vector<double>> channels;  // [C][T]
    std::vector<double> timestamps_ms;          // [T]
    std::vector<int> labels;                    // [T]
    int num_classes = 0;

    std::size_t length() const { return timestamps_ms.size(); }
    std::size_t channel_count() const { return channels.size(); }

    /// Throws DataError when any invariant fails.
    void validate() const;
};

/// Fixed-length analysis segment; the classifier's input sample.
struct Window {
    std::string subject_id;
    std::size_t start = 0;  // first covered timestep in the recording
    double timestamp_ms = 0.0;
    int label = -1;  // ground truth; only the oracle may read it
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<double> values;  // channel-major [C][L]

    /// Stable identifier across splits.
    std::string uid() const { return subject_id + "#" + std::to_string(start); }
};

struct CsvSchema {
    /// Expected channel columns; empty means "every ch_* column in order".
    std::vector<std::string> channels;
    int num_classes = 0;
};

/// Reads `subject_id,timestamp_ms,label,ch_0,...` rows. One recording per
/// subject, ordered by subject id.
std::vector<SensorRecording> load_csv(const std::filesystem::path& path, const CsvSchema& schema);
void write_csv(const std::filesystem::path& path, std::span<const SensorRecording> recordings);

/// Timesteps covered by a window of `window_ms` at `rate_hz`.
std::size_t window_steps(double window_ms, double rate_hz);

std::vector<Window> segment_windows(const SensorRecording& rec, double window_ms, double stride_ms);

/// Majority label over `labels`; ties resolved by the label at `midpoint`
/// when it is among the tied labels, else the smallest tied label.
int majority_label(std::span<const int> labels, std::size_t midpoint);

/// Linear interpolation per channel, nearest-neighbour labels.
SensorRecording resample(const SensorRecording& rec, double target_rate_hz);

struct SplitSpec {
    std::string target_subject;
    double train_fraction = 3.0 / 7.0;  // train:test = 3:4
    std::uint64_t seed = 0;
};

struct LosoSplit {
    std::vector<Window> pretrain;
    std::vector<Window> target_train;
    std::vector<Window> target_test;
};

using SubjectWindows = std::map<std::string, std::vector<Window>>;

SubjectWindows window_all(std::span<const SensorRecording> recordings, double window_ms, double stride_ms);

/// Leave-one-subject-out split. Target windows are cut into maximal runs of
/// equal label; each run is split into one contiguous train block and one
/// contiguous test block (the seed picks which block comes first).
LosoSplit loso_split(const SubjectWindows& windows, const SplitSpec& spec);

struct SynthConfig {
    int classes = 3;
    int subjects = 4;
    int channels = 3;
    double per_class_seconds = 20.0;
    int blocks_per_class = 2;
    double sample_rate_hz = 100.0;
    double shift = 1.0;  // magnitude of the per-subject gain/offset/phase distortion
    double noise = 0.1;
    std::uint64_t seed = 1;
};

/// Band-limited per-class patterns with a fixed random affine distortion per
/// subject. Deterministic in the seed.
std::vector<SensorRecording> synth_generate(const SynthConfig& config);

/// Stacks windows into a [N, C, L] batch.
Tensor stack_windows(std::span<const Window> windows);
Tensor stack_windows(std::span<const Window> windows, std::span<const std::size_t> indices);

}  // namespace xsa
