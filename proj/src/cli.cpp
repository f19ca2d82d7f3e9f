#include "xsadapt/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "xsadapt/benchmark.hpp"
#include "xsadapt/errors.hpp"
#include "xsadapt/log.hpp"
#include "xsadapt/metrics.hpp"
#include "xsadapt/settings.hpp"
#include "xsadapt/version.hpp"

namespace xsa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::string variant;
    std::optional<int> iters;
    std::string checkpoint;
    std::string target;
};

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failure on " + path.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

/// Config with command-line overrides folded in, so the manifest hash covers them.
KeyValueConfig load_config(const Options& o) {
    KeyValueConfig kv = o.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(o.config);
    if (o.seed) kv.set("seed", std::to_string(*o.seed));
    if (!o.variant.empty()) kv.set("adapt.variant", o.variant);
    if (o.iters) kv.set("adapt.iterations", std::to_string(*o.iters));
    if (!o.target.empty()) kv.set("adapt.target", o.target);
    return kv;
}

struct Fold {
    std::string target;
    std::size_t index = 0;
    std::size_t classes = 0;
    FoldSeeds seeds;
    LosoSplit split;
};

Fold prepare_fold(const Settings& s) {
    const auto recordings = load_recordings(s);
    const SubjectWindows windows = window_all(recordings, s.bench.window_ms, s.bench.stride_ms);
    if (windows.size() < 2) throw DataError("need at least two subjects");
    Fold f;
    for (const auto& r : recordings) f.classes = std::max(f.classes, static_cast<std::size_t>(r.num_classes));
    f.target = s.target.empty() ? windows.begin()->first : s.target;
    const auto it = windows.find(f.target);
    if (it == windows.end()) throw LookupError("unknown target subject '" + f.target + "'");
    f.index = static_cast<std::size_t>(std::distance(windows.begin(), it));
    f.seeds = fold_seeds(s.seed, f.index);
    f.split = loso_split(windows, SplitSpec{f.target, 3.0 / 7.0, f.seeds.split});
    if (f.split.pretrain.empty() || f.split.target_train.empty() || f.split.target_test.empty())
        throw DataError("empty split for target " + f.target);
    return f;
}

Model pretrain_source(const Settings& s, const Fold& f, TrainResult* result = nullptr) {
    ArchitectureConfig arch = s.bench.arch;
    arch.channels = f.split.pretrain.front().channels;
    arch.length = f.split.pretrain.front().length;
    arch.classes = f.classes;
    Model m = build(arch, f.seeds.build);
    TrainConfig pt = s.bench.pretrain;
    pt.seed = f.seeds.pretrain;
    TrainResult r = pretrain(m, f.split.pretrain, pt);
    for (const auto& w : r.warnings) log_warn(w);
    if (result) *result = std::move(r);
    return m;
}

/// Explicit checkpoint, else `<out>/source.ckpt.json` if present, else pretrain now.
Model source_model(const Options& o, const Settings& s, const Fold& f) {
    fs::path ckpt = o.checkpoint;
    if (ckpt.empty() && fs::exists(fs::path(o.out) / "source.ckpt.json")) ckpt = fs::path(o.out) / "source.ckpt.json";
    if (!ckpt.empty()) {
        Model m = load_checkpoint(ckpt);
        if (m.arch.channels != f.split.target_train.front().channels ||
            m.arch.length != f.split.target_train.front().length)
            throw DataError("checkpoint input shape does not match the configured data");
        return m;
    }
    log_info("no source checkpoint; pretraining");
    return pretrain_source(s, f);
}

json manifest(const std::string& verb, const KeyValueConfig& kv, const Settings& s, const Fold* fold) {
    const std::string canon = kv.canonical();
    json m{{"tool", "xsadapt"},
           {"version", kVersion},
           {"verb", verb},
           {"config_hash", hex(hash_bytes(canon.data(), canon.size()))},
           {"config", kv.values()},
           {"seed", s.seed}};
    if (fold) {
        m["target"] = fold->target;
        m["seeds"] = {{"fold", fold->seeds.fold},
                      {"split", fold->seeds.split},
                      {"build", fold->seeds.build},
                      {"pretrain", fold->seeds.pretrain},
                      {"adapt", fold->seeds.adapt}};
    }
    return m;
}

json metrics_json(const Metrics& m) {
    json per = json::array();
    for (const auto& c : m.per_class) {
        per.push_back({{"tp", c.tp},
                       {"fp", c.fp},
                       {"fn", c.fn},
                       {"tn", c.tn},
                       {"precision", c.precision},
                       {"recall", c.recall},
                       {"precision_undefined", c.precision_undefined},
                       {"recall_undefined", c.recall_undefined}});
    }
    return {{"accuracy", m.accuracy},
            {"macro_precision", m.macro_precision},
            {"macro_recall", m.macro_recall},
            {"per_class", per}};
}

int cmd_synth_gen(const Options& o) {
    const KeyValueConfig kv = load_config(o);
    const Settings s = settings_from_config(kv);
    const fs::path out(o.out);
    ensure_dir(out);
    const auto recs = synth_generate(s.synth);
    write_csv(out / "data.csv", recs);
    write_json(out / "manifest.json", manifest("synth-gen", kv, s, nullptr));
    std::cout << "wrote " << recs.size() << " subjects to " << (out / "data.csv").string() << '\n';
    return kExitOk;
}

int cmd_pretrain(const Options& o) {
    const KeyValueConfig kv = load_config(o);
    const Settings s = settings_from_config(kv);
    const fs::path out(o.out);
    ensure_dir(out);
    const Fold f = prepare_fold(s);
    TrainResult tr;
    const Model m = pretrain_source(s, f, &tr);
    const double acc = accuracy(predict(m, f.split.target_test), f.split.target_test);
    save_checkpoint(m, out / "source.ckpt.json");
    write_json(out / "pretrain.json", {{"target", f.target},
                                       {"pretrain_windows", f.split.pretrain.size()},
                                       {"source_accuracy", acc},
                                       {"loss_curve", tr.loss_curve},
                                       {"warnings", tr.warnings}});
    write_json(out / "manifest.json", manifest("pretrain", kv, s, &f));
    std::cout << "target " << f.target << ": source-only accuracy " << acc << "%\n";
    return kExitOk;
}

int cmd_adapt(const Options& o) {
    const KeyValueConfig kv = load_config(o);
    const Settings s = settings_from_config(kv);
    const fs::path out(o.out);
    ensure_dir(out);
    const Fold f = prepare_fold(s);
    const Model source = source_model(o, s, f);
    RunConfig run = s.bench.run;
    run.seed = f.seeds.adapt;
    const AdaptationResult res = run_adaptation(source, f.split.target_train, f.split.target_test, run);
    ensure_dir(out / "snapshots");
    for (std::size_t i = 0; i < res.snapshots.size(); ++i)
        write_json(out / "snapshots" / ("iter_" + std::to_string(i + 1) + ".json"), res.snapshots[i]);
    write_json(out / "report.json", to_json(res.report));
    write_json(out / "ledger.json", res.ledger.to_json());
    save_checkpoint(res.model, out / "student.ckpt.json");
    write_json(out / "manifest.json", manifest("adapt", kv, s, &f));
    std::cout << "target " << f.target << " [" << to_string(run.variant) << "]: " << res.report.source_accuracy
              << "% -> " << res.report.final_accuracy << "% with " << res.ledger.count() << " queries\n";
    return kExitOk;
}

int cmd_fullft(const Options& o) {
    const KeyValueConfig kv = load_config(o);
    const Settings s = settings_from_config(kv);
    const fs::path out(o.out);
    ensure_dir(out);
    const Fold f = prepare_fold(s);
    const Model source = source_model(o, s, f);
    RunConfig run = s.bench.run;
    run.seed = f.seeds.adapt;
    const Model full = run_full_finetune(source, f.split.target_train, run);
    const double acc = accuracy(predict(full, f.split.target_test), f.split.target_test);
    save_checkpoint(full, out / "fullft.ckpt.json");
    write_json(out / "fullft.json", {{"target", f.target}, {"accuracy", acc}});
    write_json(out / "manifest.json", manifest("fullft", kv, s, &f));
    std::cout << "target " << f.target << ": full fine-tune accuracy " << acc << "%\n";
    return kExitOk;
}

int cmd_evaluate(const Options& o) {
    const KeyValueConfig kv = load_config(o);
    const Settings s = settings_from_config(kv);
    const fs::path out(o.out);
    ensure_dir(out);
    const Fold f = prepare_fold(s);
    const fs::path ckpt = o.checkpoint.empty() ? out / "student.ckpt.json" : fs::path(o.checkpoint);
    const Model m = load_checkpoint(ckpt);
    const auto preds = predict(m, f.split.target_test);
    const Metrics met = metrics(confusion(preds, f.split.target_test, m.arch.classes));
    json j = metrics_json(met);
    j["target"] = f.target;
    j["checkpoint"] = ckpt.string();
    j["test_windows"] = f.split.target_test.size();
    write_json(out / "evaluation.json", j);
    write_json(out / "manifest.json", manifest("evaluate", kv, s, &f));
    std::cout << "target " << f.target << ": accuracy " << met.accuracy << "%, macro precision "
              << met.macro_precision << "%, macro recall " << met.macro_recall << "%\n";
    return kExitOk;
}

int cmd_ablate(const Options& o) {
    const KeyValueConfig kv = load_config(o);
    const Settings s = settings_from_config(kv);
    const fs::path out(o.out);
    ensure_dir(out);
    const auto recordings = load_recordings(s);
    BenchmarkConfig b = s.bench;
    if (!s.target.empty()) b.targets = {s.target};
    const BenchmarkReport report = loso_evaluate(recordings, b);
    emit_report(report, out, "report");
    write_json(out / "manifest.json", manifest("ablate", kv, s, nullptr));
    std::cout << format_table(report);
    for (const auto& f : report.folds)
        if (!f.ok) std::cout << "fold " << f.target << " failed: " << f.error << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"xsadapt: cross-subject adaptation with self-training and active querying"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;
    int iters = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "key=value config file");
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "root seed override");
        sub->add_option("--target", o.target, "target subject (default: first)");
    };
    auto* synth = app.add_subcommand("synth-gen", "generate the synthetic shifted dataset as CSV");
    common(synth);
    auto* pre = app.add_subcommand("pretrain", "train the source model on every subject but the target");
    common(pre);
    auto* adapt = app.add_subcommand("adapt", "adapt the source model to the target subject");
    common(adapt);
    adapt->add_option("--variant", o.variant, "activeself | sub_ust | sub_slss");
    adapt->add_option("--iters", iters, "iteration count");
    adapt->add_option("--checkpoint", o.checkpoint, "source checkpoint");
    auto* full = app.add_subcommand("fullft", "fine-tune the head on every labeled target training window");
    common(full);
    full->add_option("--checkpoint", o.checkpoint, "source checkpoint");
    auto* eval = app.add_subcommand("evaluate", "score a checkpoint on the target test split");
    common(eval);
    eval->add_option("--checkpoint", o.checkpoint, "checkpoint (default: <out>/student.ckpt.json)");
    auto* ablate = app.add_subcommand("ablate", "LOSO benchmark over every variant");
    common(ablate);
    ablate->add_option("--iters", iters, "iteration count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    for (auto* sub : app.get_subcommands()) {
        if (sub->count("--seed")) o.seed = seed;
        if (sub->get_option_no_throw("--iters") && sub->count("--iters")) o.iters = iters;
    }

    try {
        if (synth->parsed()) return cmd_synth_gen(o);
        if (pre->parsed()) return cmd_pretrain(o);
        if (adapt->parsed()) return cmd_adapt(o);
        if (full->parsed()) return cmd_fullft(o);
        if (eval->parsed()) return cmd_evaluate(o);
        if (ablate->parsed()) return cmd_ablate(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InvariantViolation& e) {
        std::cerr << "invariant violation: " << e.what() << '\n';
        return kExitInvariant;
    } catch (const ContractError& e) {
        std::cerr << "invariant violation: " << e.what() << '\n';
        return kExitInvariant;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        // schema, data, dimension, lookup and numeric failures all trace back to the input
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    std::cerr << app.help();
    return kExitUsage;
}

}  // namespace xsa
