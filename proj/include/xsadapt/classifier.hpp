#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xsadapt/dataset.hpp"
#include "xsadapt/network.hpp"

namespace xsa {

enum class Architecture { tpn, double_stream, mlp };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& name);

struct ArchitectureConfig {
    Architecture name = Architecture::mlp;
    std::size_t channels = 0;  // C
    std::size_t length = 0;    // L, timesteps per window
    std::size_t classes = 0;   // K
    /// Hidden dense widths for the mlp; the last one is the feature layer.
    std::vector<std::size_t> hidden{64, 32};
    double dropout = 0.1;    // tpn conv stack
    double l2 = 1e-4;        // tpn conv weight decay
    std::size_t streams = 2; // double_stream

    bool operator==(const ArchitectureConfig&) const = default;
};

/// A network plus everything needed to resume or replay training.
struct Model {
    ArchitectureConfig arch;
    Network net{Shape{}};
    AdamState adam;
    std::uint64_t seed = 0;
};

/// Softmax output ("probabilistic label") with the penultimate features.
struct Prediction {
    std::vector<double> probabilities;
    std::vector<double> features;
    double confidence = 0.0;
    int label = -1;
};

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

struct TrainResult {
    std::vector<double> loss_curve;  // mean loss per epoch
    std::vector<std::string> warnings;
};

struct TrainingSample {
    std::size_t index = 0;  // into the window sequence handed to fine_tune
    int label = 0;
};

/// Throws ConfigError when the input shape cannot pass through the stack.
Model build(const ArchitectureConfig& config, std::uint64_t seed);

/// Closed-form trainable parameter count for `config`.
std::size_t expected_parameter_count(const ArchitectureConfig& config);

/// Full-network training with Adam and cross-entropy.
TrainResult pretrain(Model& model, std::span<const Window> windows, const TrainConfig& config);

std::vector<Prediction> predict(const Model& model, std::span<const Window> windows, std::size_t batch_size = 512);
std::vector<Prediction> predict(const Model& model, std::span<const Window> windows,
                                std::span<const std::size_t> indices, std::size_t batch_size = 512);

/// Trains only the layers after the feature stack. The feature stack runs
/// in eval mode and its parameters, buffers and Adam slots stay untouched.
TrainResult fine_tune(Model& model, std::span<const Window> windows, std::span<const TrainingSample> pool,
                      const TrainConfig& config);

double accuracy(std::span<const Prediction> predictions, std::span<const Window> windows);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace xsa
