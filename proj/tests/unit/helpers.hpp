#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "xsadapt/dataset.hpp"
#include "xsadapt/rng.hpp"

namespace testutil {

inline xsa::SensorRecording make_recording(const std::string& id, std::size_t length, std::size_t channels,
                                           std::vector<int> labels, int classes, double rate_hz = 100.0) {
    xsa::SensorRecording r;
    r.subject_id = id;
    r.sample_rate_hz = rate_hz;
    r.num_classes = classes;
    for (std::size_t c = 0; c < channels; ++c) {
        r.channel_names.push_back("ch_" + std::to_string(c));
        std::vector<double> v(length);
        for (std::size_t t = 0; t < length; ++t) v[t] = static_cast<double>(c) + 0.01 * static_cast<double>(t);
        r.channels.push_back(std::move(v));
    }
    for (std::size_t t = 0; t < length; ++t) r.timestamps_ms.push_back(1000.0 * static_cast<double>(t) / rate_hz);
    r.labels = std::move(labels);
    return r;
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("xsadapt_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace testutil
