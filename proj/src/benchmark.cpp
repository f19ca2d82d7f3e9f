#include "xsadapt/benchmark.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <future>
#include <iomanip>
#include <sstream>

#include "xsadapt/errors.hpp"
#include "xsadapt/log.hpp"
#include "xsadapt/metrics.hpp"

namespace xsa {

using nlohmann::json;

std::pair<double, double> mean_std(std::span<const double> v) {
    if (v.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() < 2) return {m, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

FoldSeeds fold_seeds(std::uint64_t root, std::size_t fold_index) {
    FoldSeeds s;
    s.fold = derive_seed(root, "fold", fold_index);
    s.split = derive_seed(s.fold, "split");
    s.build = derive_seed(s.fold, "build");
    s.pretrain = derive_seed(s.fold, "pretrain");
    s.adapt = derive_seed(s.fold, "adapt");
    return s;
}

std::vector<double> BenchmarkReport::per_iteration_mean(Variant v) const {
    std::vector<double> sum;
    std::vector<std::size_t> n;
    for (const auto& f : folds) {
        if (!f.ok || !f.variants.contains(v)) continue;
        const auto& its = f.variants.at(v).iterations;
        if (sum.size() < its.size()) {
            sum.resize(its.size(), 0.0);
            n.resize(its.size(), 0);
        }
        for (std::size_t i = 0; i < its.size(); ++i) {
            sum[i] += its[i].accuracy;
            ++n[i];
        }
    }
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= static_cast<double>(std::max<std::size_t>(1, n[i]));
    return sum;
}

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

FoldResult run_fold(const SubjectWindows& windows, const std::string& target, std::size_t fold_index,
                    const BenchmarkConfig& cfg) {
    FoldResult fold;
    fold.target = target;
    try {
        const FoldSeeds seeds = fold_seeds(cfg.seed, fold_index);
        const LosoSplit split = loso_split(windows, SplitSpec{target, 3.0 / 7.0, seeds.split});
        fold.pretrain_windows = split.pretrain.size();
        fold.train_windows = split.target_train.size();
        fold.test_windows = split.target_test.size();
        if (split.pretrain.empty() || split.target_train.empty() || split.target_test.empty()) {
            throw DataError("fold " + target + ": empty split");
        }
        ArchitectureConfig arch = cfg.arch;
        arch.channels = split.pretrain.front().channels;
        arch.length = split.pretrain.front().length;
        Model source = build(arch, seeds.build);
        TrainConfig pt = cfg.pretrain;
        pt.seed = seeds.pretrain;
        const auto t0 = std::chrono::steady_clock::now();
        pretrain(source, split.pretrain, pt);
        fold.pretrain_wall_ms = ms_since(t0);
        fold.source_accuracy = accuracy(predict(source, split.target_test), split.target_test);

        RunConfig run = cfg.run;
        run.seed = seeds.adapt;
        for (Variant v : cfg.variants) {
            run.variant = v;
            auto res = run_adaptation(source, split.target_train, split.target_test, run);
            fold.variants.emplace(v, std::move(res.report));
        }
        if (cfg.fullft) {
            const auto t1 = std::chrono::steady_clock::now();
            const Model full = run_full_finetune(source, split.target_train, run);
            fold.fullft_wall_ms = ms_since(t1);
            fold.fullft_accuracy = accuracy(predict(full, split.target_test), split.target_test);
        }
    } catch (const std::exception& e) {
        fold.ok = false;
        fold.error = e.what();
        log_error("fold " + target + " failed: " + fold.error);
    }
    return fold;
}

}  // namespace

void summarize(BenchmarkReport& report, std::span<const Variant> variants, bool fullft) {
    report.summary.clear();
    auto add = [&](const std::string& name, auto&& acc, auto&& lab, auto&& time) {
        std::vector<double> a, l, t;
        for (const auto& f : report.folds) {
            if (!f.ok) continue;
            a.push_back(acc(f));
            l.push_back(lab(f));
            t.push_back(time(f));
        }
        MethodSummary s;
        s.method = name;
        std::tie(s.mean_accuracy, s.std_accuracy) = mean_std(a);
        s.mean_labeled_percentage = mean_std(l).first;
        s.mean_time_s = mean_std(t).first;
        s.folds = a.size();
        report.summary.push_back(s);
    };
    add("source_only", [](const FoldResult& f) { return f.source_accuracy; }, [](const FoldResult&) { return 0.0; },
        [](const FoldResult&) { return 0.0; });
    for (Variant v : variants) {
        add(to_string(v), [v](const FoldResult& f) { return f.variants.at(v).final_accuracy; },
            [v](const FoldResult& f) {
                const auto& its = f.variants.at(v).iterations;
                return its.empty() ? 0.0 : its.back().labeled_percentage;
            },
            [v](const FoldResult& f) { return f.variants.at(v).total_wall_ms() / 1000.0; });
    }
    if (fullft) {
        add("fullft", [](const FoldResult& f) { return f.fullft_accuracy; },
            [](const FoldResult& f) {
                return labeled_percentage(f.train_windows, f.train_windows + f.test_windows);
            },
            [](const FoldResult& f) { return f.fullft_wall_ms / 1000.0; });
    }
}

BenchmarkReport loso_evaluate(std::span<const SensorRecording> recordings, const BenchmarkConfig& cfg) {
    if (recordings.size() < 2) throw DataError("loso_evaluate: at least two subjects required");
    const SubjectWindows windows = window_all(recordings, cfg.window_ms, cfg.stride_ms);
    BenchmarkConfig cfg_k = cfg;
    for (const auto& r : recordings)
        cfg_k.arch.classes = std::max(cfg_k.arch.classes, static_cast<std::size_t>(r.num_classes));
    std::vector<std::string> targets = cfg.targets;
    if (targets.empty())
        for (const auto& [id, w] : windows) targets.push_back(id);
    BenchmarkReport report;
    report.folds.resize(targets.size());
    // Fold seeds follow the subject's position, so a target subset reproduces the full sweep's folds.
    auto subject_index = [&](const std::string& id) {
        const auto it = windows.find(id);
        if (it == windows.end()) return windows.size();
        return static_cast<std::size_t>(std::distance(windows.begin(), it));
    };
    const std::size_t jobs = std::max<std::size_t>(1, cfg.jobs);
    for (std::size_t b0 = 0; b0 < targets.size(); b0 += jobs) {
        const std::size_t b1 = std::min(targets.size(), b0 + jobs);
        if (jobs == 1) {
            report.folds[b0] = run_fold(windows, targets[b0], subject_index(targets[b0]), cfg_k);
            continue;
        }
        std::vector<std::future<FoldResult>> pending;
        for (std::size_t i = b0; i < b1; ++i)
            pending.push_back(std::async(std::launch::async, run_fold, std::cref(windows), targets[i], subject_index(targets[i]), std::cref(cfg_k)));
        for (std::size_t i = b0; i < b1; ++i) report.folds[i] = pending[i - b0].get();
    }
    summarize(report, cfg.variants, cfg.fullft);
    return report;
}

// ---------------------------------------------------------------------------

namespace {

AdaptationReport adaptation_from_json(const json& j) {
    AdaptationReport r;
    r.variant = variant_from_string(j.at("variant").get<std::string>());
    r.source_accuracy = j.at("source_accuracy").get<double>();
    r.final_accuracy = j.at("final_accuracy").get<double>();
    r.total_target_windows = j.at("total_target_windows").get<std::size_t>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& e : j.at("iterations")) {
        IterationReport it;
        it.iteration = e.at("iteration").get<int>();
        it.accuracy = e.at("accuracy").get<double>();
        it.new_queries = e.at("new_queries").get<std::size_t>();
        it.cumulative_queries = e.at("cumulative_queries").get<std::size_t>();
        it.labeled_percentage = e.at("labeled_percentage").get<double>();
        it.self_training = e.at("self_training").get<std::size_t>();
        it.queried = e.at("queried").get<std::size_t>();
        it.propagated = e.at("propagated").get<std::size_t>();
        it.fine_tuned = e.at("fine_tuned").get<bool>();
        it.flags = e.at("flags").get<std::vector<std::string>>();
        if (e.contains("timing")) it.timing.wall_ms = e["timing"].at("wall_ms").get<std::map<std::string, double>>();
        r.iterations.push_back(std::move(it));
    }
    return r;
}

constexpr const char* kReportSchema = "xsadapt-benchmark/1";

}  // namespace

json to_json(const BenchmarkReport& report, bool with_timing) {
    json j;
    j["schema"] = kReportSchema;
    json folds = json::array();
    for (const auto& f : report.folds) {
        json e{{"target", f.target},
               {"ok", f.ok},
               {"error", f.error},
               {"pretrain_windows", f.pretrain_windows},
               {"train_windows", f.train_windows},
               {"test_windows", f.test_windows},
               {"source_accuracy", f.source_accuracy},
               {"fullft_accuracy", f.fullft_accuracy}};
        if (with_timing) e["timing"] = {{"pretrain_wall_ms", f.pretrain_wall_ms}, {"fullft_wall_ms", f.fullft_wall_ms}};
        json vars = json::array();
        for (const auto& [v, r] : f.variants) vars.push_back(to_json(r, with_timing));
        e["variants"] = vars;
        folds.push_back(e);
    }
    j["folds"] = folds;
    json summary = json::array();
    for (const auto& s : report.summary) {
        json e{{"method", s.method},
               {"mean_accuracy", s.mean_accuracy},
               {"std_accuracy", s.std_accuracy},
               {"mean_labeled_percentage", s.mean_labeled_percentage},
               {"folds", s.folds}};
        if (with_timing) e["mean_time_s"] = s.mean_time_s;
        summary.push_back(e);
    }
    j["summary"] = summary;
    return j;
}

BenchmarkReport benchmark_from_json(const json& j) {
    if (j.value("schema", "") != kReportSchema) throw DataError("not a benchmark report");
    BenchmarkReport r;
    for (const auto& e : j.at("folds")) {
        FoldResult f;
        f.target = e.at("target").get<std::string>();
        f.ok = e.at("ok").get<bool>();
        f.error = e.at("error").get<std::string>();
        f.pretrain_windows = e.at("pretrain_windows").get<std::size_t>();
        f.train_windows = e.at("train_windows").get<std::size_t>();
        f.test_windows = e.at("test_windows").get<std::size_t>();
        f.source_accuracy = e.at("source_accuracy").get<double>();
        f.fullft_accuracy = e.at("fullft_accuracy").get<double>();
        if (e.contains("timing")) {
            f.pretrain_wall_ms = e["timing"].at("pretrain_wall_ms").get<double>();
            f.fullft_wall_ms = e["timing"].at("fullft_wall_ms").get<double>();
        }
        for (const auto& v : e.at("variants")) {
            AdaptationReport a = adaptation_from_json(v);
            f.variants.emplace(a.variant, std::move(a));
        }
        r.folds.push_back(std::move(f));
    }
    for (const auto& e : j.at("summary")) {
        MethodSummary s;
        s.method = e.at("method").get<std::string>();
        s.mean_accuracy = e.at("mean_accuracy").get<double>();
        s.std_accuracy = e.at("std_accuracy").get<double>();
        s.mean_labeled_percentage = e.at("mean_labeled_percentage").get<double>();
        s.mean_time_s = e.value("mean_time_s", 0.0);
        s.folds = e.at("folds").get<std::size_t>();
        r.summary.push_back(s);
    }
    return r;
}

std::string format_table(const BenchmarkReport& report) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "Method" << std::right << std::setw(15) << "Time cost (s)"
       << std::setw(18) << "Labeled data (%)" << std::setw(16) << "Accuracy (%)" << std::setw(10) << "Std" << '\n';
    os << std::string(73, '-') << '\n';
    os << std::fixed << std::setprecision(2);
    for (const auto& s : report.summary) {
        os << std::left << std::setw(14) << s.method << std::right << std::setw(15) << s.mean_time_s << std::setw(18)
           << s.mean_labeled_percentage << std::setw(16) << s.mean_accuracy << std::setw(10) << s.std_accuracy << '\n';
    }
    return os.str();
}

void emit_report(const BenchmarkReport& report, const std::filesystem::path& dir, const std::string& stem) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    {
        std::ofstream out(dir / (stem + ".json"));
        if (!out) throw IoError("cannot write " + (dir / (stem + ".json")).string());
        out << to_json(report).dump(2) << '\n';
        if (!out) throw IoError("write failure on " + (dir / (stem + ".json")).string());
    }
    std::ofstream out(dir / (stem + ".txt"));
    if (!out) throw IoError("cannot write " + (dir / (stem + ".txt")).string());
    out << format_table(report);
    if (!out) throw IoError("write failure on " + (dir / (stem + ".txt")).string());
}

}  // namespace xsa
