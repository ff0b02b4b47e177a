#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dehrl/baselines.hpp"
#include "dehrl/envs.hpp"
#include "dehrl/hierarchy.hpp"

namespace dehrl {

enum class EnvKind : std::uint8_t { OverCooked = 0, MineCraft = 1 };

struct EnvConfig {
    EnvKind kind = EnvKind::OverCooked;
    OverCookedConfig overcooked;
    Encoding encoding = Encoding::Pixel;
    MineCraftConfig minecraft;

    std::size_t action_count() const;
};

struct RunConfig {
    std::string name;
    EnvConfig env;
    /// Levels are empty when a baseline drives the run.
    HierarchyConfig hierarchy;
    std::optional<BaselineKind> baseline;
    /// Primitive steps per seed, summed over actors.
    std::uint64_t budget = 0;
    std::vector<std::uint64_t> seeds{1};
    /// Top-level reset period in primitive steps; 0 disables it.
    std::uint64_t meta_reset_interval = 0;
    std::uint64_t checkpoint_interval = 100000;
    /// Relative paths resolve against the output root.
    std::string output_dir;
};

/// Parses and validates a JSON run configuration. Unknown keys and invalid
/// values raise ConfigError naming the key.
RunConfig parse_config(const std::string& text);

std::unique_ptr<Environment> make_environment(const EnvConfig& env, std::uint64_t seed);

/// The hierarchy actually trained: the configured one, or the single-level
/// lambda = 0 stack of a baseline.
HierarchyConfig effective_hierarchy(const RunConfig& config);

/// Hierarchy (with any baseline bonus attached) for one seed of the run.
std::unique_ptr<Hierarchy> build_agent(const RunConfig& config, std::uint64_t seed);

}  // namespace dehrl
