#include "xsadapt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <set>

#include "xsadapt/errors.hpp"
#include "xsadapt/log.hpp"
#include "xsadapt/metrics.hpp"

namespace xsa {

using nlohmann::json;

std::string to_string(Variant v) {
    switch (v) {
        case Variant::activeself: return "activeself";
        case Variant::sub_ust: return "sub_ust";
        case Variant::sub_slss: return "sub_slss";
    }
    return "unknown";
}

Variant variant_from_string(const std::string& s) {
    if (s == "activeself") return Variant::activeself;
    if (s == "sub_ust") return Variant::sub_ust;
    if (s == "sub_slss") return Variant::sub_slss;
    throw ConfigError("unknown variant '" + s + "' (expected activeself, sub_ust or sub_slss)");
}

std::size_t LabeledPool::count(Provenance p) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [p](const PoolEntry& e) { return e.provenance == p; }));
}

std::vector<TrainingSample> LabeledPool::samples() const {
    std::vector<TrainingSample> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(TrainingSample{e.index, e.label});
    return out;
}

LabeledPool assemble_pool(const SelfTrainingSet& s, const AugmentedSet& a, int iteration) {
    LabeledPool pool;
    pool.iteration = iteration;
    std::map<std::size_t, PoolEntry> merged;
    for (std::size_t i = 0; i < s.members.size(); ++i)
        merged.emplace(s.members[i], PoolEntry{s.members[i], s.pseudo_labels[i], Provenance::pseudo});
    for (const auto& m : a.members) {
        const auto [it, inserted] = merged.emplace(m.index, PoolEntry{m.index, m.label, m.provenance});
        if (!inserted) {
            throw InvariantViolation("assemble_pool: index " + std::to_string(m.index) +
                                     " is in both the self-training set and the augmented set");
        }
    }
    pool.entries.reserve(merged.size());
    for (auto& [i, e] : merged) pool.entries.push_back(e);
    return pool;
}

double PhaseTiming::total() const {
    double t = 0.0;
    for (const auto& [k, v] : wall_ms) t += v;
    return t;
}

double AdaptationReport::total_wall_ms() const {
    double t = 0.0;
    for (const auto& it : iterations) t += it.timing.total();
    return t;
}

namespace {

class PhaseClock {
public:
    PhaseClock(PhaseTiming& timing, std::vector<std::string>& order, std::string name)
        : timing_(timing), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {
        order.push_back(name_);
    }
    ~PhaseClock() {
        const auto dt = std::chrono::steady_clock::now() - start_;
        timing_.wall_ms[name_] += std::chrono::duration<double, std::milli>(dt).count();
    }

private:
    PhaseTiming& timing_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
};

// Centers from the teacher's unthresholded argmax over `indices`; used
// when S cannot supply two centers.
CenterSet fallback_centers(std::span<const Prediction> preds, std::span<const Point3> coords,
                           std::span<const std::size_t> indices) {
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) labels.push_back(preds[i].label);
    return build_center_set(indices, labels, coords);
}

}  // namespace

IterationResult run_iteration(const Model& teacher, std::span<const Window> train, OracleLedger& ledger,
                              const LabelSource& oracle, const RunConfig& cfg, int iteration) {
    if (iteration < 1) throw ConfigError("run_iteration: iterations are 1-based");
    if (train.size() < 4) throw DataError("run_iteration: target training set too small");
    if (oracle.size() != train.size()) throw ContractError("run_iteration: oracle does not cover the training set");
    IterationResult res;
    res.teacher_hash = teacher.net.hash();

    std::vector<Prediction> preds;
    {
        PhaseClock clock(res.timing, res.phase_order, "predict");
        preds = predict(teacher, train, cfg.predict_batch);
        res.selection_indices.resize(train.size());
        std::iota(res.selection_indices.begin(), res.selection_indices.end(), std::size_t{0});
    }
    std::vector<Point3> coords;
    {
        PhaseClock clock(res.timing, res.phase_order, "pca");
        const std::size_t d = preds.front().features.size();
        std::vector<double> flat;
        flat.reserve(preds.size() * d);
        for (const auto& p : preds) flat.insert(flat.end(), p.features.begin(), p.features.end());
        res.pca = pca_fit(flat, preds.size(), d);
        if (res.pca.padded) res.flags.push_back("pca_rank_deficient");
        coords.reserve(preds.size());
        for (const auto& p : preds) coords.push_back(pca_transform(res.pca, p.features));
    }

    const std::vector<std::size_t> known = ledger.indices();
    {
        PhaseClock clock(res.timing, res.phase_order, "self_training");
        res.self_training = build_self_training_set(preds, iteration, cfg.base_threshold, known);
        if (res.self_training.empty()) res.flags.push_back("empty_self_training_set");
        if (!res.self_training.empty()) res.centers = build_center_set(res.self_training, coords);
    }

    std::vector<bool> in_s(train.size(), false);
    for (std::size_t i : res.self_training.members) in_s[i] = true;
    std::vector<std::size_t> candidates;  // T \ S \ ledger
    for (std::size_t i = 0; i < train.size(); ++i)
        if (!in_s[i] && !ledger.contains(i)) candidates.push_back(i);

    CenterSet boundary_centers = res.centers;
    std::vector<CoreSample> core_samples;
    if (queries_oracle(cfg.variant)) {
        PhaseClock clock(res.timing, res.phase_order, "core_set");
        if (boundary_centers.size() < 2) {
            std::vector<std::size_t> pool_idx;
            for (std::size_t i = 0; i < train.size(); ++i)
                if (!ledger.contains(i)) pool_idx.push_back(i);
            boundary_centers = fallback_centers(preds, coords, pool_idx);
            res.fallback_centers = true;
            res.flags.push_back("fallback_centers");
        }
        if (boundary_centers.size() >= 2 && !candidates.empty()) {
            const auto dvs = distance_vectors(candidates, coords, boundary_centers);
            res.core = select_core_set(dvs, cfg.per_boundary, ledger, oracle, cfg.selection);
            if (res.core.degenerate > 0) res.flags.push_back("duplicate_centers");
        } else {
            res.flags.push_back("no_boundaries");
        }
        // Every label the oracle has ever returned joins A.
        for (const auto& [i, label] : ledger.entries()) core_samples.push_back(CoreSample{i, label});
    }

    {
        PhaseClock clock(res.timing, res.phase_order, "augment");
        std::vector<std::size_t> prop_candidates;
        for (std::size_t i : candidates)
            if (!ledger.contains(i)) prop_candidates.push_back(i);
        if (propagates(cfg.variant) && !core_samples.empty() && !boundary_centers.empty()) {
            std::vector<double> ts(train.size());
            for (std::size_t i = 0; i < train.size(); ++i) ts[i] = train[i].timestamp_ms;
            res.augmented = augment_core_set(core_samples, prop_candidates, boundary_centers, coords, ts, cfg.augment);
            if (res.augmented.anchor_fallbacks) res.flags.push_back("anchor_fallback");
            if (res.augmented.disabled_cores) res.flags.push_back("core_at_center");
        } else {
            res.augmented = augment_core_set(core_samples, {}, boundary_centers, coords,
                                             std::vector<double>(train.size(), 0.0), cfg.augment);
        }
    }

    {
        PhaseClock clock(res.timing, res.phase_order, "assemble");
        res.pool = assemble_pool(res.self_training, res.augmented, iteration);
    }

    res.student = teacher;
    if (res.pool.empty()) {
        res.flags.push_back("empty_pool_skip_finetune");
        log_warn("iteration " + std::to_string(iteration) + ": empty labeled pool, teacher kept");
    } else {
        PhaseClock clock(res.timing, res.phase_order, "fine_tune");
        TrainConfig tc = cfg.finetune;
        tc.seed = derive_seed(cfg.seed, "finetune", static_cast<std::uint64_t>(iteration));
        const auto samples = res.pool.samples();
        auto tr = fine_tune(res.student, train, samples, tc);
        res.warnings = std::move(tr.warnings);
        res.fine_tuned = true;
    }
    res.student_hash = res.student.net.hash();
    return res;
}

json snapshot_json(const IterationResult& it, const RunConfig& cfg, int iteration, const OracleLedger& ledger) {
    json j;
    j["schema"] = "xsadapt-iteration/1";
    j["iteration"] = iteration;
    j["variant"] = to_string(cfg.variant);
    j["phase_order"] = it.phase_order;
    j["flags"] = it.flags;
    j["warnings"] = it.warnings;
    j["threshold"] = it.self_training.threshold;
    std::map<int, std::size_t> per_class;
    for (int l : it.self_training.pseudo_labels) ++per_class[l];
    json s_per_class = json::object();
    for (const auto& [k, n] : per_class) s_per_class[std::to_string(k)] = n;
    j["self_training"] = {{"size", it.self_training.size()}, {"per_class", s_per_class}};
    json centers = json::array();
    for (const auto& c : it.centers.centers)
        centers.push_back({{"class", c.label}, {"index", c.index}, {"coords", c.coords}});
    j["centers"] = centers;
    j["fallback_centers"] = it.fallback_centers;
    j["pca"] = to_json(it.pca);
    json queries = json::array();
    for (const auto& q : it.core.samples)
        queries.push_back({{"index", q.index},
                           {"category", {q.boundary.first, q.boundary.second}},
                           {"f_i", q.score},
                           {"label", q.label}});
    j["queries"] = queries;
    j["boundary_categories"] = it.core.categories;
    j["ledger"] = ledger.to_json();
    j["augmented"] = {{"size", it.augmented.size()},
                      {"propagated", it.augmented.propagated},
                      {"propagated_per_core", it.augmented.propagated_per_core},
                      {"f_s_histogram", it.augmented.histogram()}};
    j["pool"] = {{"size", it.pool.size()},
                 {"pseudo", it.pool.count(Provenance::pseudo)},
                 {"queried", it.pool.count(Provenance::queried)},
                 {"propagated", it.pool.count(Provenance::propagated)}};
    j["fine_tuned"] = it.fine_tuned;
    j["teacher_hash"] = it.teacher_hash;
    j["student_hash"] = it.student_hash;
    j["timing"] = {{"wall_ms", it.timing.wall_ms}};
    return j;
}

AdaptationResult run_adaptation(const Model& source, std::span<const Window> train, std::span<const Window> test,
                                const RunConfig& cfg, bool keep_iterations) {
    if (cfg.max_iterations < 0) throw ConfigError("run_adaptation: negative iteration count");
    AdaptationResult out;
    out.model = source;
    AdaptationReport& rep = out.report;
    rep.variant = cfg.variant;
    rep.total_target_windows = train.size() + test.size();
    std::vector<int> truth;
    truth.reserve(train.size());
    for (const auto& w : train) truth.push_back(w.label);
    const VectorLabelSource oracle(std::move(truth));
    auto test_accuracy = [&](const Model& m) {
        return test.empty() ? 0.0 : accuracy(predict(m, test, cfg.predict_batch), test);
    };
    rep.source_accuracy = test_accuracy(source);
    rep.final_accuracy = rep.source_accuracy;

    for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
        const std::size_t before = out.ledger.count();
        IterationResult it = run_iteration(out.model, train, out.ledger, oracle, cfg, iter);
        IterationReport ir;
        ir.iteration = iter;
        ir.new_queries = out.ledger.count() - before;
        ir.cumulative_queries = out.ledger.count();
        ir.labeled_percentage = rep.total_target_windows ? labeled_percentage(ir.cumulative_queries, rep.total_target_windows) : 0.0;
        ir.self_training = it.self_training.size();
        ir.queried = it.pool.count(Provenance::queried);
        ir.propagated = it.pool.count(Provenance::propagated);
        ir.fine_tuned = it.fine_tuned;
        ir.flags = it.flags;
        {
            const auto t0 = std::chrono::steady_clock::now();
            ir.accuracy = test_accuracy(it.student);
            it.timing.wall_ms["evaluate"] =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        }
        ir.timing = it.timing;
        for (const auto& w : it.warnings) rep.warnings.push_back("iteration " + std::to_string(iter) + ": " + w);
        out.snapshots.push_back(snapshot_json(it, cfg, iter, out.ledger));
        out.snapshots.back()["test_accuracy"] = ir.accuracy;
        out.model = it.student;
        rep.final_accuracy = ir.accuracy;
        rep.iterations.push_back(std::move(ir));
        if (keep_iterations) out.iterations.push_back(std::move(it));
    }
    return out;
}

Model run_full_finetune(const Model& source, std::span<const Window> train, const RunConfig& cfg) {
    Model m = source;
    std::vector<TrainingSample> pool;
    pool.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) pool.push_back(TrainingSample{i, train[i].label});
    TrainConfig tc = cfg.finetune;
    tc.seed = derive_seed(cfg.seed, "fullft");
    fine_tune(m, train, pool, tc);
    return m;
}

json to_json(const AdaptationReport& r, bool with_timing) {
    json j;
    j["variant"] = to_string(r.variant);
    j["source_accuracy"] = r.source_accuracy;
    j["final_accuracy"] = r.final_accuracy;
    j["total_target_windows"] = r.total_target_windows;
    j["warnings"] = r.warnings;
    json its = json::array();
    for (const auto& it : r.iterations) {
        json e{{"iteration", it.iteration},
               {"accuracy", it.accuracy},
               {"new_queries", it.new_queries},
               {"cumulative_queries", it.cumulative_queries},
               {"labeled_percentage", it.labeled_percentage},
               {"self_training", it.self_training},
               {"queried", it.queried},
               {"propagated", it.propagated},
               {"fine_tuned", it.fine_tuned},
               {"flags", it.flags}};
        if (with_timing) e["timing"] = {{"wall_ms", it.timing.wall_ms}};
        its.push_back(e);
    }
    j["iterations"] = its;
    if (with_timing) j["timing"] = {{"total_wall_ms", r.total_wall_ms()}};
    return j;
}

}  // namespace xsa
