#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "dehrl/runner.hpp"

namespace dehrl {

namespace fs = std::filesystem;

namespace {

constexpr char kCheckpointMagic[] = "DEHRLCKP";
constexpr std::uint32_t kCheckpointVersion = 1;

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out)
        throw std::runtime_error("cannot write " + p.string());
}

fs::path seed_dir(const fs::path& run, std::uint64_t seed) { return run / ("seed_" + std::to_string(seed)); }

}  // namespace

fs::path output_root() {
    const char* v = std::getenv(kOutputRootVar);
    return v && *v ? fs::path(v) : fs::path("runs");
}

fs::path resolve_run_dir(const RunConfig& config) {
    const fs::path p(config.output_dir);
    return p.is_absolute() ? p : output_root() / p;
}

void write_checkpoint(const fs::path& path, const CheckpointHeader& header, const Hierarchy& h) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write checkpoint " + tmp.string());
        out.write(kCheckpointMagic, 8);
        BinaryWriter w(out);
        w.write(kCheckpointVersion);
        w.write(header.seed);
        w.write(header.metrics_bytes);
        w.write(header.meta_resets);
        w.write(header.checkpoints);
        h.save(w);
        out.flush();
        if (!out)
            throw std::runtime_error("failed writing checkpoint " + tmp.string());
    }
    fs::rename(tmp, path);
}

CheckpointHeader read_checkpoint(const fs::path& path, Hierarchy& h) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read checkpoint " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
        throw FormatError(path.string() + " is not a checkpoint");
    BinaryReader r(in);
    if (r.read<std::uint32_t>() != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version in " + path.string());
    CheckpointHeader hd;
    hd.seed = r.read<std::uint64_t>();
    hd.metrics_bytes = r.read<std::uint64_t>();
    hd.meta_resets = r.read<std::uint64_t>();
    hd.checkpoints = r.read<std::uint64_t>();
    h.load(r);
    return hd;
}

SeedOutcome train_seed(const RunConfig& config, std::uint64_t seed, const fs::path& dir, bool resume,
                       const StepHook& hook, const StepHook& after_reset) {
    fs::create_directories(dir);
    const fs::path metrics_path = dir / "metrics.txt";
    const fs::path ckpt_path = dir / "checkpoint.bin";

    auto h = build_agent(config, seed);
    CheckpointHeader hd;
    hd.seed = seed;
    if (resume && fs::exists(ckpt_path)) {
        hd = read_checkpoint(ckpt_path, *h);
        if (hd.seed != seed)
            throw FormatError("checkpoint in " + dir.string() + " belongs to seed " + std::to_string(hd.seed));
        if (!fs::exists(metrics_path) || fs::file_size(metrics_path) < hd.metrics_bytes)
            throw FormatError("metrics stream in " + dir.string() + " is shorter than the checkpoint expects");
        fs::resize_file(metrics_path, hd.metrics_bytes);
    } else {
        write_file(metrics_path, "");
    }

    std::ofstream metrics(metrics_path, std::ios::binary | std::ios::app);
    if (!metrics)
        throw std::runtime_error("cannot open " + metrics_path.string());
    auto emit = [&](std::uint64_t step, const std::string& key, double value) {
        write_metric(metrics, {step, key, value});
    };
    h->set_metric_sink(emit);

    auto save = [&](const fs::path& p) {
        metrics.flush();
        hd.metrics_bytes = static_cast<std::uint64_t>(metrics.tellp());
        write_checkpoint(p, hd, *h);
    };

    try {
        while (h->total_steps() < config.budget) {
            h->step();
            if (hook)
                hook(*h);
            const std::uint64_t t = h->total_steps();
            if (config.meta_reset_interval > 0 && t / config.meta_reset_interval > hd.meta_resets) {
                const std::size_t top = h->top();
                emit(t, "level" + std::to_string(top) + "/entropy_before_reset", h->mean_policy_entropy(top));
                h->reset_top_level();
                if (after_reset)
                    after_reset(*h);
                ++hd.meta_resets;
                emit(t, "meta_reset", static_cast<double>(hd.meta_resets));
                emit(t, "level" + std::to_string(top) + "/entropy_after_reset", h->mean_policy_entropy(top));
            }
            if (t / config.checkpoint_interval > hd.checkpoints) {
                hd.checkpoints = t / config.checkpoint_interval;
                save(ckpt_path);
            }
        }
        save(ckpt_path);
    } catch (...) {
        try {
            save(dir / "checkpoint_failure.bin");
        } catch (...) {
        }
        throw;
    }
    metrics.close();

    std::ifstream in(metrics_path);
    const auto log = episode_log_from_metrics(read_metrics(in));
    SeedOutcome out;
    out.seed = seed;
    out.steps = h->total_steps();
    out.episodes = log.size();
    if (!log.empty()) {
        out.final_performance = final_performance_score(log);
        out.learning_speed = learning_speed_score(log);
    }
    nlohmann::json summary{{"seed", seed},
                           {"steps", out.steps},
                           {"episodes", out.episodes},
                           {"final_performance_score", out.final_performance},
                           {"learning_speed_score", out.learning_speed}};
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    return out;
}

namespace {

void print_outcome(std::ostream& out, const SeedOutcome& o) {
    out << "seed " << o.seed << ": steps " << o.steps << ", episodes " << o.episodes << ", final performance "
        << format_double(o.final_performance) << ", learning speed " << format_double(o.learning_speed) << '\n';
}

int train_all(const RunConfig& config, const fs::path& run, bool resume, std::ostream& out) {
    for (auto seed : config.seeds) {
        const fs::path dir = seed_dir(run, seed);
        if (resume && fs::exists(dir / "summary.json")) {
            out << "seed " << seed << ": already complete\n";
            continue;
        }
        print_outcome(out, train_seed(config, seed, dir, resume));
    }
    emit_report(run);
    out << "report written to " << (run / "report").string() << '\n';
    return 0;
}

RunConfig load_run_config(const fs::path& run) {
    const fs::path p = run / "config.json";
    if (!fs::exists(p))
        throw ConfigError(run.string() + " has no config.json (not a run directory?)");
    return parse_config(read_file(p));
}

template <typename F>
int guarded(std::ostream& err, F&& f) {
    try {
        return f();
    } catch (const ConfigError& ex) {
        err << "config error: " << ex.what() << '\n';
        return 1;
    } catch (const std::exception& ex) {
        err << "runtime failure: " << ex.what() << '\n';
        return 2;
    }
}

}  // namespace

int cli_run(const fs::path& config_path, std::ostream& out, std::ostream& err) {
    RunConfig config;
    std::string text;
    try {
        if (!fs::exists(config_path))
            throw ConfigError("config file " + config_path.string() + " does not exist");
        text = read_file(config_path);
        config = parse_config(text);
    } catch (const ConfigError& ex) {
        err << "config error: " << ex.what() << '\n';
        return 1;
    } catch (const std::exception& ex) {
        err << "config error: " << ex.what() << '\n';
        return 1;
    }
    const fs::path run = resolve_run_dir(config);
    if (fs::exists(run / "config.json")) {
        err << "config error: " << run.string() << " already holds a run; use resume\n";
        return 1;
    }
    return guarded(err, [&] {
        fs::create_directories(run);
        write_file(run / "config.json", text);
        std::string seeds;
        for (auto s : config.seeds)
            seeds += std::to_string(s) + "\n";
        write_file(run / "seeds.txt", seeds);
        out << "run directory " << run.string() << '\n';
        return train_all(config, run, false, out);
    });
}

int cli_resume(const fs::path& run, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] { return train_all(load_run_config(run), run, true, out); });
}

int cli_probe(const fs::path& run, std::size_t level, std::size_t repeats, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig config = load_run_config(run);
        if (config.env.kind != EnvKind::OverCooked)
            throw ConfigError("the subpolicy probe needs an OverCooked run");
        if (config.baseline || level == 0 || level >= config.hierarchy.levels.size())
            throw ConfigError("the probe level must be above 0 and inside the run's hierarchy");
        for (auto seed : config.seeds) {
            const fs::path ckpt = seed_dir(run, seed) / "checkpoint.bin";
            if (!fs::exists(ckpt)) {
                out << "seed " << seed << ": no checkpoint\n";
                continue;
            }
            auto h = build_agent(config, seed);
            read_checkpoint(ckpt, *h);
            auto env = make_environment(config.env, seed);
            const auto result = subpolicy_probe(*h, *env, level, repeats);
            out << "seed " << seed << ":";
            for (auto l : result.labels)
                out << ' ' << to_string(l);
            out << " (" << result.distinct_useful() << " distinct useful)\n";
        }
        return 0;
    });
}

int cli_report(const fs::path& run, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        for (const auto& key : emit_report(run))
            out << (run / "report" / (metric_file_stem(key) + ".csv")).string() << '\n';
        return 0;
    });
}

}  // namespace dehrl
