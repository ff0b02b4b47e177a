#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

#include "dehrl/config.hpp"
#include "dehrl/metrics.hpp"

namespace dehrl {

/// Environment variable naming the directory relative output paths resolve against.
inline constexpr const char* kOutputRootVar = "DEHRL_OUTPUT_ROOT";

std::filesystem::path output_root();
std::filesystem::path resolve_run_dir(const RunConfig& config);

struct CheckpointHeader {
    std::uint64_t seed = 0;
    /// Bytes of the metrics stream that belong to the checkpointed state.
    std::uint64_t metrics_bytes = 0;
    std::uint64_t meta_resets = 0;
    std::uint64_t checkpoints = 0;
};

/// Writes atomically (temporary file, then rename).
void write_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header, const Hierarchy& h);
/// Restores `h` (built from the same config) and returns the header.
CheckpointHeader read_checkpoint(const std::filesystem::path& path, Hierarchy& h);

struct SeedOutcome {
    std::uint64_t seed = 0;
    std::uint64_t steps = 0;
    std::uint64_t episodes = 0;
    double final_performance = 0.0;
    double learning_speed = 0.0;
};

/// Called after every primitive step; tests use it to inject failures.
using StepHook = std::function<void(const Hierarchy&)>;

/// Trains one seed to the budget inside `seed_dir` (metrics.txt, checkpoint.bin,
/// summary.json). With `resume`, continues from checkpoint.bin when present,
/// truncating the metrics stream to the checkpointed length. On failure the
/// current state goes to checkpoint_failure.bin and the exception propagates.
/// `after_reset` sees the hierarchy right after each top-level reset.
SeedOutcome train_seed(const RunConfig& config, std::uint64_t seed, const std::filesystem::path& seed_dir,
                       bool resume, const StepHook& hook = {}, const StepHook& after_reset = {});

/// CLI verbs. Return the process exit code: 0 success, 1 configuration error,
/// 2 runtime failure.
int cli_run(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err);
int cli_resume(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err);
int cli_probe(const std::filesystem::path& run_dir, std::size_t level, std::size_t repeats, std::ostream& out,
              std::ostream& err);
int cli_report(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err);

}  // namespace dehrl
