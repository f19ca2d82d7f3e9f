#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "xsadapt/active.hpp"
#include "xsadapt/augment.hpp"
#include "xsadapt/classifier.hpp"
#include "xsadapt/embedding.hpp"
#include "xsadapt/selftrain.hpp"

namespace xsa {

/// Which steps run: sub_ust = self-training + fine-tune; sub_slss adds
/// boundary querying; activeself adds label propagation.
enum class Variant { activeself, sub_ust, sub_slss };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

inline bool queries_oracle(Variant v) { return v != Variant::sub_ust; }
inline bool propagates(Variant v) { return v == Variant::activeself; }

struct RunConfig {
    Variant variant = Variant::activeself;
    int max_iterations = 3;
    TrainConfig finetune{};           // epochs, batch size, lr; seed is derived per iteration
    double base_threshold = 0.3;
    std::size_t per_boundary = 10;    // N
    AugmentConfig augment{};
    SelectionOrder selection = SelectionOrder::lowest;
    std::uint64_t seed = 0;
    std::size_t predict_batch = 512;
};

struct PoolEntry {
    std::size_t index = 0;
    int label = 0;
    Provenance provenance = Provenance::pseudo;
};

/// T' = S u A with per-sample provenance, ordered by index.
struct LabeledPool {
    std::vector<PoolEntry> entries;
    int iteration = 0;

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
    std::size_t count(Provenance p) const;
    std::vector<TrainingSample> samples() const;
};

/// Union of S (pseudo labels) and A (oracle labels). Throws
/// InvariantViolation if the two share an index.
LabeledPool assemble_pool(const SelfTrainingSet& s, const AugmentedSet& a, int iteration = 0);

struct PhaseTiming {
    std::map<std::string, double> wall_ms;
    double total() const;
};

struct IterationResult {
    Model student;
    bool fine_tuned = false;
    SelfTrainingSet self_training;
    CenterSet centers;
    bool fallback_centers = false;
    PcaModel pca;
    CoreSet core;
    AugmentedSet augmented;
    LabeledPool pool;
    std::vector<std::size_t> selection_indices;  // windows whose predictions drove selection
    std::vector<std::string> flags;
    std::vector<std::string> phase_order;
    std::vector<std::string> warnings;
    PhaseTiming timing;
    std::uint64_t teacher_hash = 0;
    std::uint64_t student_hash = 0;
};

/// One teacher -> student step on the target training windows. The ledger
/// carries oracle labels across iterations.
IterationResult run_iteration(const Model& teacher, std::span<const Window> train, OracleLedger& ledger,
                              const LabelSource& oracle, const RunConfig& config, int iteration);

nlohmann::json snapshot_json(const IterationResult& it, const RunConfig& config, int iteration,
                             const OracleLedger& ledger);

struct IterationReport {
    int iteration = 0;
    double accuracy = 0.0;  // target test, percent
    std::size_t new_queries = 0;
    std::size_t cumulative_queries = 0;
    double labeled_percentage = 0.0;
    std::size_t self_training = 0;
    std::size_t queried = 0;
    std::size_t propagated = 0;
    bool fine_tuned = false;
    std::vector<std::string> flags;
    PhaseTiming timing;
};

struct AdaptationReport {
    Variant variant = Variant::activeself;
    double source_accuracy = 0.0;
    double final_accuracy = 0.0;
    std::size_t total_target_windows = 0;
    std::vector<IterationReport> iterations;
    std::vector<std::string> warnings;

    double total_wall_ms() const;
};

struct AdaptationResult {
    Model model;
    AdaptationReport report;
    std::vector<nlohmann::json> snapshots;
    OracleLedger ledger;
    std::vector<IterationResult> iterations;  // kept only when requested
};

/// Runs `max_iterations` iterations starting from the source model.
/// `total_target_windows` (train + test) is the labelled-percentage
/// denominator.
AdaptationResult run_adaptation(const Model& source, std::span<const Window> train, std::span<const Window> test,
                                const RunConfig& config, bool keep_iterations = false);

/// Supervised upper bound: fine-tune on every target training window with
/// its true label.
Model run_full_finetune(const Model& source, std::span<const Window> train, const RunConfig& config);

nlohmann::json to_json(const AdaptationReport& report, bool with_timing = true);

}  // namespace xsa
