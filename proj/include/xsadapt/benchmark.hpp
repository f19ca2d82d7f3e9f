#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "xsadapt/classifier.hpp"
#include "xsadapt/dataset.hpp"
#include "xsadapt/pipeline.hpp"

namespace xsa {

struct BenchmarkConfig {
    ArchitectureConfig arch;  // channels/length/classes are filled from the data
    TrainConfig pretrain{};
    RunConfig run{};  // run.variant is ignored; `variants` lists what to run
    std::vector<Variant> variants{Variant::sub_ust, Variant::sub_slss, Variant::activeself};
    bool fullft = true;
    double window_ms = 300.0;
    double stride_ms = 30.0;
    std::uint64_t seed = 0;  // root seed; fold seeds derive from it
    std::size_t jobs = 1;    // folds evaluated concurrently
    std::vector<std::string> targets;  // empty: every subject
};

struct FoldResult {
    std::string target;
    bool ok = true;
    std::string error;
    std::size_t pretrain_windows = 0;
    std::size_t train_windows = 0;
    std::size_t test_windows = 0;
    double source_accuracy = 0.0;
    double fullft_accuracy = 0.0;
    double pretrain_wall_ms = 0.0;
    double fullft_wall_ms = 0.0;
    std::map<Variant, AdaptationReport> variants;
};

struct MethodSummary {
    std::string method;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // sample standard deviation over folds
    double mean_labeled_percentage = 0.0;
    double mean_time_s = 0.0;
    std::size_t folds = 0;
};

struct BenchmarkReport {
    std::vector<FoldResult> folds;
    std::vector<MethodSummary> summary;  // source, variants..., fullft
    std::vector<double> per_iteration_mean(Variant v) const;
};

/// Seeds for one LOSO fold, all derived from the root seed and fold index.
struct FoldSeeds {
    std::uint64_t fold = 0;
    std::uint64_t split = 0;
    std::uint64_t build = 0;
    std::uint64_t pretrain = 0;
    std::uint64_t adapt = 0;
};
FoldSeeds fold_seeds(std::uint64_t root, std::size_t fold_index);

/// Mean and sample standard deviation (0 for fewer than two values).
std::pair<double, double> mean_std(std::span<const double> values);

/// Leave-one-subject-out over every subject (or the listed targets). Failed
/// folds are recorded and skipped.
BenchmarkReport loso_evaluate(std::span<const SensorRecording> recordings, const BenchmarkConfig& config);

/// Rebuilds `summary` from the fold results.
void summarize(BenchmarkReport& report, std::span<const Variant> variants, bool fullft);

nlohmann::json to_json(const BenchmarkReport& report, bool with_timing = true);
BenchmarkReport benchmark_from_json(const nlohmann::json& j);

/// Fixed-width comparison table: method, time cost, labeled %, accuracy.
std::string format_table(const BenchmarkReport& report);

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.txt`.
void emit_report(const BenchmarkReport& report, const std::filesystem::path& dir, const std::string& stem = "report");

}  // namespace xsa
