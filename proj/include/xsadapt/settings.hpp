#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xsadapt/benchmark.hpp"
#include "xsadapt/config.hpp"
#include "xsadapt/dataset.hpp"

namespace xsa {

/// Everything a CLI run needs, decoded from a flat key/value config.
struct Settings {
    std::uint64_t seed = 0;
    std::string data_source = "synth";  // synth | csv
    std::filesystem::path data_path;    // csv file when data_source == csv
    CsvSchema schema;
    SynthConfig synth;
    BenchmarkConfig bench;  // arch, training, run config, windowing
    std::string target;     // adapt/pretrain/fullft/evaluate target subject; empty = first
};

/// Throws ConfigError on malformed values or unknown keys.
Settings settings_from_config(const KeyValueConfig& config);

/// Loads the configured dataset (synthetic or CSV).
std::vector<SensorRecording> load_recordings(const Settings& settings);

std::vector<std::string> split_list(const std::string& text);

}  // namespace xsa
