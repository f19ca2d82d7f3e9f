#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "xsadapt/cli.hpp"
#include "xsadapt/config.hpp"
#include "xsadapt/errors.hpp"
#include "xsadapt/settings.hpp"

using namespace xsa;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "xsadapt");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

constexpr const char* kSmallConfig = R"(# tiny synthetic run
seed = 11
synth.classes = 3
synth.subjects = 3
synth.channels = 3
synth.per_class_seconds = 6
synth.shift = 1.5
model.arch = mlp
model.hidden = 16, 8
pretrain.epochs = 2
finetune.epochs = 1
adapt.iterations = 2
adapt.threshold = 0.7
)";

fs::path write_config(const fs::path& dir, const std::string& text) {
    const auto p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST_CASE("key-value parsing") {
    const auto kv = KeyValueConfig::parse("a = 1  # note\n\n b=two words \n# whole line\nc=2.5\nd=yes");
    CHECK(kv.get_int("a", 0) == 1);
    CHECK(kv.get("b", "") == "two words");
    CHECK(kv.get_double("c", 0.0) == 2.5);
    CHECK(kv.get_bool("d", false));
    CHECK(kv.get_int("missing", 7) == 7);
    CHECK(kv.unused_keys().empty());
    CHECK(kv.canonical() == "a=1\nb=two words\nc=2.5\nd=yes\n");
}

TEST_CASE("key-value errors") {
    CHECK_THROWS_AS(KeyValueConfig::parse("novalue"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse("=3"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse("a=1\na=2"), ConfigError);
    const auto kv = KeyValueConfig::parse("n=abc\nu=-3\nb=maybe");
    CHECK_THROWS_AS(kv.get_int("n", 0), ConfigError);
    CHECK_THROWS_AS(kv.get_double("n", 0), ConfigError);
    CHECK_THROWS_AS(kv.get_uint("u", 0), ConfigError);
    CHECK_THROWS_AS(kv.get_bool("b", false), ConfigError);
    CHECK_THROWS_AS(kv.require("zzz"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/x.cfg"), ConfigError);
}

TEST_CASE("settings map keys onto run parameters") {
    const auto s = settings_from_config(KeyValueConfig::parse(kSmallConfig));
    CHECK(s.seed == 11);
    CHECK(s.synth.seed == 11);
    CHECK(s.synth.classes == 3);
    CHECK(s.bench.arch.hidden == std::vector<std::size_t>{16, 8});
    CHECK(s.bench.run.max_iterations == 2);
    CHECK(s.bench.run.base_threshold == 0.7);
    CHECK(s.bench.run.per_boundary == 10);
    CHECK(s.bench.run.augment.thres_t_s == 5.0);
    CHECK(s.bench.window_ms == 300.0);
    CHECK(s.bench.stride_ms == 30.0);
    CHECK(split_list(" a, b ,,c ") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("settings reject bad values and unknown keys") {
    for (const char* bad : {"adapt.variant = ust", "adapt.threshold = 1.5", "model.arch = lstm", "pretrain.lr = 0",
                            "adapt.selection = top", "model.hidden = 4,x", "synth.shift = -1", "data.source = ftp",
                            "adapt.iteratoins = 3", "model.dropout = 1"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(settings_from_config(KeyValueConfig::parse(bad)), ConfigError);
    }
    CHECK_THROWS_AS(settings_from_config(KeyValueConfig::parse("data.source = csv")), ConfigError);
}

TEST_CASE("command line end to end on synthetic data") {
    const auto dir = testutil::scratch_dir("cli_e2e");
    const auto cfg = write_config(dir, kSmallConfig).string();
    const auto out = (dir / "out").string();

    REQUIRE(cli({"synth-gen", "--config", cfg, "--out", out}) == kExitOk);
    CHECK(fs::exists(dir / "out" / "data.csv"));
    REQUIRE(cli({"pretrain", "--config", cfg, "--out", out}) == kExitOk);
    CHECK(fs::exists(dir / "out" / "source.ckpt.json"));
    REQUIRE(cli({"adapt", "--config", cfg, "--out", out}) == kExitOk);
    for (const char* f : {"report.json", "ledger.json", "student.ckpt.json", "snapshots/iter_1.json", "snapshots/iter_2.json"})
        CHECK(fs::exists(dir / "out" / f));
    REQUIRE(cli({"evaluate", "--config", cfg, "--out", out}) == kExitOk);
    const auto ev = read_json(dir / "out" / "evaluation.json");
    CHECK(ev.contains("per_class"));
    CHECK(ev["accuracy"].get<double>() >= 0.0);

    const auto m = read_json(dir / "out" / "manifest.json");
    CHECK(m["verb"] == "evaluate");
    CHECK(m["seed"] == 11);
    CHECK(m["config"]["adapt.threshold"] == "0.7");
    CHECK(m["config_hash"].get<std::string>().size() == 16);
    CHECK(m.contains("seeds"));

    // Explicit source checkpoint reproduces the same run.
    const auto out2 = (dir / "out2").string();
    REQUIRE(cli({"adapt", "--config", cfg, "--out", out2, "--checkpoint", out + "/source.ckpt.json"}) == kExitOk);
    auto r1 = read_json(dir / "out" / "report.json"), r2 = read_json(dir / "out2" / "report.json");
    for (auto* r : {&r1, &r2}) {
        r->erase("timing");
        for (auto& it : (*r)["iterations"]) it.erase("timing");
    }
    CHECK(r1 == r2);
}

TEST_CASE("sub_ust through the command line makes no queries") {
    const auto dir = testutil::scratch_dir("cli_ust");
    const auto cfg = write_config(dir, kSmallConfig).string();
    const auto out = (dir / "out").string();
    REQUIRE(cli({"adapt", "--config", cfg, "--out", out, "--variant", "sub_ust", "--iters", "1"}) == kExitOk);
    const auto ledger = read_json(dir / "out" / "ledger.json");
    CHECK(ledger["count"] == 0);
    const auto m = read_json(dir / "out" / "manifest.json");
    CHECK(m["config"]["adapt.variant"] == "sub_ust");
    CHECK(m["config"]["adapt.iterations"] == "1");
}

TEST_CASE("command line error exits") {
    const auto dir = testutil::scratch_dir("cli_err");
    CHECK(cli({"adapt", "--config", (dir / "absent.cfg").string(), "--out", (dir / "o").string()}) == kExitConfig);
    CHECK(cli({"bogus"}) == kExitUsage);
    CHECK(cli({}) == kExitUsage);
    const auto cfg = write_config(dir, "adapt.variant = nope\n").string();
    CHECK(cli({"adapt", "--config", cfg, "--out", (dir / "o").string()}) == kExitConfig);
    const auto csv = write_config(dir, "data.source = csv\ndata.path = " + (dir / "none.csv").string() +
                                           "\ndata.channels = a,b,c\ndata.classes = 3\n")
                         .string();
    CHECK(cli({"pretrain", "--config", csv, "--out", (dir / "o").string()}) == kExitIo);
    CHECK(cli({"evaluate", "--config", write_config(dir, kSmallConfig).string(), "--out", (dir / "o").string(),
               "--checkpoint", (dir / "missing.json").string()}) == kExitIo);
}
