#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dehrl/runner.hpp"

using namespace dehrl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("dehrl_runner_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string small_run(const std::string& out_dir, std::uint64_t budget = 3000) {
    return R"({
        "name": "smoke",
        "env": {"name": "overcooked", "encoding": "compact", "step_limit": 60},
        "hierarchy": {"levels": [{"actions": 16, "period": 1}, {"actions": 3, "period": 4}]},
        "network": {"policy_hidden": [16], "predictor_encoder": [16], "predictor_decoder": [8]},
        "ppo": {"horizon": 16, "minibatch_size": 32, "actors": 2},
        "budget": )" + std::to_string(budget) + R"(,
        "seeds": [1, 2],
        "checkpoint_interval": 500,
        "output_dir": ")" + out_dir + R"("
    })";
}

std::string expect_config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    FAIL("config was accepted: " << text);
    return {};
}

struct Interrupt : std::runtime_error {
    Interrupt() : std::runtime_error("injected failure") {}
};

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing

TEST_CASE("the three-level OverCooked preset shape is accepted") {
    const auto c = parse_config(R"({
        "env": {"name": "overcooked"},
        "hierarchy": {"levels": [{"actions": 16, "period": 1}, {"actions": 5, "period": 4}, {"actions": 5, "period": 48}]},
        "budget": 1000
    })");
    REQUIRE(c.hierarchy.levels.size() == 3);
    CHECK(c.hierarchy.levels[2].period == 48);
    CHECK(c.hierarchy.levels[1].action_count == 5);
    CHECK(c.hierarchy.ppo.horizon == 128);
    CHECK(c.hierarchy.ppo.adam.step_size == 5e-4);
    CHECK(c.hierarchy.ppo.entropy_coef == 0.01);
    CHECK(c.seeds == std::vector<std::uint64_t>{1});
    CHECK_FALSE(c.baseline.has_value());
}

TEST_CASE("every shipped preset parses") {
    std::size_t n = 0;
    for (const auto& entry : fs::directory_iterator(DEHRL_PRESET_DIR)) {
        if (entry.path().extension() != ".json")
            continue;
        CAPTURE(entry.path().string());
        CHECK_NOTHROW(parse_config(slurp(entry.path())));
        ++n;
    }
    CHECK(n >= 8);
}

TEST_CASE("a period that is not a multiple of the one below is rejected") {
    const auto msg = expect_config_error(R"({
        "env": {"name": "overcooked"},
        "hierarchy": {"levels": [{"actions": 16, "period": 1}, {"actions": 5, "period": 4}, {"actions": 5, "period": 6}]},
        "budget": 1000
    })");
    CHECK(msg.find("multiple") != std::string::npos);
}

TEST_CASE("level-0 action count must match the environment") {
    const auto msg = expect_config_error(R"({
        "env": {"name": "overcooked"},
        "hierarchy": {"levels": [{"actions": 11, "period": 1}]},
        "budget": 1000
    })");
    CHECK(msg.find("16") != std::string::npos);
}

TEST_CASE("unknown keys are rejected by name") {
    CHECK(expect_config_error(R"({"env": {"name": "overcooked"}, "baseline": {"kind": "ppo"}, "budget": 10, "budjet": 3})")
              .find("budjet") != std::string::npos);
    CHECK(expect_config_error(R"({"env": {"name": "overcooked", "gird_size": 7}, "baseline": {"kind": "ppo"}, "budget": 10})")
              .find("env.gird_size") != std::string::npos);
    CHECK(expect_config_error(R"({"env": {"name": "overcooked"}, "baseline": {"kind": "ppo"}, "ppo": {"horizn": 3}, "budget": 10})")
              .find("ppo.horizn") != std::string::npos);
}

TEST_CASE("structural errors") {
    // Exactly one of hierarchy and baseline.
    expect_config_error(R"({"env": {"name": "overcooked"}, "budget": 10})");
    expect_config_error(R"({"env": {"name": "overcooked"}, "baseline": {"kind": "ppo"},
        "hierarchy": {"levels": [{"actions": 16, "period": 1}]}, "budget": 10})");
    expect_config_error(R"({"env": {"name": "overcooked"}, "baseline": {"kind": "ppo"}, "budget": 0})");
    expect_config_error(R"({"env": {"name": "overcooked"}, "baseline": {"kind": "snn"}, "budget": 10})");
    expect_config_error(R"({"env": {"name": "atari"}, "baseline": {"kind": "ppo"}, "budget": 10})");
    expect_config_error(R"({"env": {"name": "overcooked"}, "baseline": {"kind": "ppo"}, "budget": 10, "seeds": [1, 1]})");
    expect_config_error(R"({"env": {"name": "overcooked"}, "baseline": {"kind": "ppo"}, "budget": "ten"})");
    expect_config_error(R"({"env": {"name": "overcooked"}, "baseline": {"kind": "ppo"}, "budget": 10,
        "ppo": {"clip_epsilon": -1}})");
    expect_config_error("{not json");
}

TEST_CASE("learning_rate and step_size name the same Adam step") {
    const std::string head = R"({"env": {"name": "overcooked"}, "baseline": {"kind": "ppo"}, "budget": 10, "ppo": )";
    CHECK(parse_config(head + R"({"learning_rate": 7e-4}})").hierarchy.ppo.adam.step_size == 7e-4);
    CHECK(parse_config(head + R"({"step_size": 1e-3}})").hierarchy.ppo.adam.step_size == 1e-3);
    CHECK(parse_config(head + R"({"step_size": 1e-3, "learning_rate": 1e-3}})").hierarchy.ppo.adam.step_size == 1e-3);
    CHECK(expect_config_error(head + R"({"step_size": 5e-4, "learning_rate": 7e4}})").find("learning_rate") !=
          std::string::npos);
}

TEST_CASE("MineCraft config and baselines") {
    const auto c = parse_config(R"({
        "env": {"name": "minecraft", "action_count": 11},
        "hierarchy": {"levels": [{"actions": 11, "period": 1}, {"actions": 8, "period": 4}], "intrinsic_only": true},
        "budget": 1000
    })");
    CHECK(c.env.kind == EnvKind::MineCraft);
    CHECK(c.env.action_count() == 11);
    CHECK(c.hierarchy.intrinsic_only);
    const auto b = parse_config(R"({"env": {"name": "overcooked"}, "baseline": {"kind": "state_novelty", "bonus_scale": 0.2}, "budget": 10})");
    CHECK(b.baseline == BaselineKind::StateNovelty);
    CHECK(b.hierarchy.bonus_scale == 0.2);
    const auto eff = effective_hierarchy(b);
    REQUIRE(eff.levels.size() == 1);
    CHECK(eff.levels[0].action_count == 16);
}

// ---------------------------------------------------------------------------
// Output root

TEST_CASE("relative output directories resolve against the output root variable") {
    RunConfig c;
    c.output_dir = "abc";
    ::setenv(kOutputRootVar, "/tmp/dehrl_root_test", 1);
    CHECK(resolve_run_dir(c) == fs::path("/tmp/dehrl_root_test/abc"));
    c.output_dir = "/elsewhere/run";
    CHECK(resolve_run_dir(c) == fs::path("/elsewhere/run"));
    ::unsetenv(kOutputRootVar);
    c.output_dir = "abc";
    CHECK(resolve_run_dir(c) == fs::path("runs/abc"));
}

// ---------------------------------------------------------------------------
// Runs

TEST_CASE("run: artifacts, exit codes, probe and report") {
    const auto root = scratch("cli");
    ::setenv(kOutputRootVar, root.c_str(), 1);
    spit(root / "run.json", small_run("smoke"));
    std::ostringstream out, err;
    REQUIRE(cli_run(root / "run.json", out, err) == 0);
    const auto run = root / "smoke";
    CHECK(fs::exists(run / "config.json"));
    CHECK(slurp(run / "seeds.txt") == "1\n2\n");
    for (const char* seed : {"seed_1", "seed_2"}) {
        CHECK(fs::exists(run / seed / "checkpoint.bin"));
        CHECK(fs::exists(run / seed / "summary.json"));
        std::ifstream m(run / seed / "metrics.txt");
        const auto recs = read_metrics(m);
        CHECK(!recs.empty());
        CHECK(!episode_log_from_metrics(recs).empty());
    }
    CHECK(fs::exists(run / "report" / "episode_reward.csv"));
    CHECK(fs::exists(run / "report" / "episode_reward.svg"));
    CHECK(fs::exists(run / "report" / "level1_transition_loss.svg"));

    // A second run into the same directory is refused.
    CHECK(cli_run(root / "run.json", out, err) == 1);
    CHECK(cli_run(root / "missing.json", out, err) == 1);
    spit(root / "bad.json", "{\"env\": ");
    CHECK(cli_run(root / "bad.json", out, err) == 1);

    std::ostringstream probe;
    CHECK(cli_probe(run, 1, 4, probe, err) == 0);
    CHECK(probe.str().find("seed 1:") != std::string::npos);
    CHECK(probe.str().find("seed 2:") != std::string::npos);
    CHECK(cli_probe(run, 0, 4, probe, err) == 1);
    CHECK(cli_probe(root / "nothing", 1, 4, probe, err) == 1);

    std::ostringstream rep;
    CHECK(cli_report(run, rep, err) == 0);
    CHECK(rep.str().find("episode_reward.csv") != std::string::npos);
    CHECK(cli_report(root / "nothing", rep, err) == 2);

    // Resume of a finished run changes nothing.
    const auto before = slurp(run / "seed_1" / "metrics.txt");
    std::ostringstream res;
    CHECK(cli_resume(run, res, err) == 0);
    CHECK(res.str().find("already complete") != std::string::npos);
    CHECK(slurp(run / "seed_1" / "metrics.txt") == before);

    // A corrupt checkpoint is a runtime failure.
    fs::remove(run / "seed_2" / "summary.json");
    spit(run / "seed_2" / "checkpoint.bin", "garbage");
    CHECK(cli_resume(run, res, err) == 2);
    ::unsetenv(kOutputRootVar);
    fs::remove_all(root);
}

TEST_CASE("an interrupted seed resumes to the same bytes as an uninterrupted one") {
    const auto root = scratch("resume");
    const auto cfg = parse_config(small_run("x", 2500));
    train_seed(cfg, 3, root / "whole", false);

    // Fail mid-run, after the checkpoint at 1000 steps and before the next one.
    auto hook = [](const Hierarchy& h) {
        if (h.total_steps() == 1300)
            throw Interrupt();
    };
    CHECK_THROWS_AS(train_seed(cfg, 3, root / "cut", false, hook), Interrupt);
    CHECK(fs::exists(root / "cut" / "checkpoint_failure.bin"));
    CHECK_FALSE(fs::exists(root / "cut" / "summary.json"));
    {
        auto h = build_agent(cfg, 3);
        read_checkpoint(root / "cut" / "checkpoint_failure.bin", *h);
        CHECK(h->total_steps() == 1300);
        auto g = build_agent(cfg, 3);
        const auto hd = read_checkpoint(root / "cut" / "checkpoint.bin", *g);
        CHECK(g->total_steps() == 1000);
        CHECK(hd.checkpoints == 2);
    }
    train_seed(cfg, 3, root / "cut", true);
    CHECK(slurp(root / "cut" / "metrics.txt") == slurp(root / "whole" / "metrics.txt"));
    CHECK(slurp(root / "cut" / "checkpoint.bin") == slurp(root / "whole" / "checkpoint.bin"));
    CHECK(slurp(root / "cut" / "summary.json") == slurp(root / "whole" / "summary.json"));
    fs::remove_all(root);
}

TEST_CASE("checkpoint files round-trip bit-exactly") {
    const auto root = scratch("ckpt");
    const auto cfg = parse_config(small_run("x"));
    auto a = build_agent(cfg, 1);
    for (int t = 0; t < 300; ++t)
        a->step();
    CheckpointHeader hd{1, 1234, 2, 5};
    write_checkpoint(root / "a.bin", hd, *a);
    auto b = build_agent(cfg, 1);
    const auto back = read_checkpoint(root / "a.bin", *b);
    CHECK(back.metrics_bytes == 1234);
    CHECK(back.meta_resets == 2);
    CHECK(back.checkpoints == 5);
    write_checkpoint(root / "b.bin", back, *b);
    CHECK(slurp(root / "a.bin") == slurp(root / "b.bin"));
    CHECK_FALSE(fs::exists(root / "a.bin.tmp"));
    spit(root / "c.bin", slurp(root / "a.bin").substr(0, 100));
    CHECK_THROWS_AS(read_checkpoint(root / "c.bin", *b), FormatError);
    fs::remove_all(root);
}

TEST_CASE("meta reset: entropy jumps and lower levels are untouched") {
    const auto root = scratch("meta");
    auto text = small_run("x", 2000);
    text.insert(text.rfind('}'), R"(, "meta_reset_interval": 810)");
    const auto cfg = parse_config(text);
    CHECK(cfg.meta_reset_interval == 810);
    Vector lower_before;
    bool checked = false;
    auto hook = [&](const Hierarchy& h) {
        // The reset fires after the hook at 810; no level trains between 808 and 812.
        auto lower = [&] {
            Vector v(h.level(0).policy.parameters().begin(), h.level(0).policy.parameters().end());
            v.insert(v.end(), h.level(1).predictor->parameters().begin(), h.level(1).predictor->parameters().end());
            return v;
        };
        if (h.total_steps() == 808)
            lower_before = lower();
        if (h.total_steps() == 812) {
            CHECK(lower() == lower_before);
            checked = true;
        }
    };
    train_seed(cfg, 1, root / "s", false, hook);
    CHECK(checked);
    std::ifstream m(root / "s" / "metrics.txt");
    std::vector<double> before, after;
    for (const auto& r : read_metrics(m)) {
        if (r.key == "level1/entropy_before_reset")
            before.push_back(r.value);
        if (r.key == "level1/entropy_after_reset")
            after.push_back(r.value);
    }
    REQUIRE(before.size() == 2);
    REQUIRE(after.size() == 2);
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(after[i] > 0.999 * std::log(3.0));
    fs::remove_all(root);
}
