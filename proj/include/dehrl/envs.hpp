#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dehrl/approx.hpp"
#include "dehrl/serialize.hpp"

namespace dehrl {

/// Channels x height x width tensor with values in [0, 1], row-major per channel.
struct Observation {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    Vector data;

    Observation() = default;
    Observation(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), data(c * h * w, 0.0) {}

    std::size_t size() const { return data.size(); }
    double& at(std::size_t c, std::size_t r, std::size_t col) { return data[(c * height + r) * width + col]; }
    double at(std::size_t c, std::size_t r, std::size_t col) const { return data[(c * height + r) * width + col]; }
    bool same_shape(const Observation& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    bool operator==(const Observation&) const = default;
};

struct StepOutcome {
    double reward = 0.0;
    bool done = false;
};

// ---------------------------------------------------------------------------
// OverCooked

enum class GoalType : std::uint8_t { Any = 0, Fix = 1, Random = 2 };

std::string to_string(GoalType g);
GoalType parse_goal_type(const std::string& name);

/// One of the six (reward level, goal type) combinations.
class RewardSetting {
public:
    RewardSetting() = default;
    RewardSetting(int reward_level, GoalType goal, int fixed_goal = 0);

    int reward_level() const { return reward_level_; }
    GoalType goal() const { return goal_; }
    int fixed_goal() const { return fixed_goal_; }
    bool operator==(const RewardSetting&) const = default;

private:
    int reward_level_ = 1;
    GoalType goal_ = GoalType::Any;
    int fixed_goal_ = 0;
};

enum class LegState : std::uint8_t { Rest = 0, Up = 1, Down = 2, Left = 3, Right = 4 };

struct OverCookedConfig {
    int grid_size = 7;
    int step_limit = 200;
    RewardSetting reward;
};

inline constexpr std::size_t kOverCookedActions = 16;
inline constexpr int kIngredientCount = 4;

struct OverCookedState {
    int grid_size = 7;
    int step_limit = 200;
    RewardSetting setting;
    int row = 0;
    int col = 0;
    std::array<LegState, 4> legs{};
    std::array<int, 4> to_pick{0, 1, 2, 3};
    std::array<bool, 4> collected{};
    std::vector<int> picked;
    int steps = 0;
    bool done = false;

    /// Corner cell of ingredient `id`: 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
    std::array<int, 2> ingredient_cell(int id) const;
    /// Ingredient that must be picked next, or -1 when any uncollected one will do.
    int next_target() const;

    void save(BinaryWriter& w) const;
    static OverCookedState load(BinaryReader& r);
    bool operator==(const OverCookedState&) const = default;
};

OverCookedState overcooked_reset(std::uint64_t seed, const OverCookedConfig& config);

/// Action = leg * 4 + direction, direction in {up, down, left, right}.
StepOutcome overcooked_step(OverCookedState& state, std::size_t action);

enum class Encoding : std::uint8_t { Compact = 0, Pixel = 1 };
Encoding parse_encoding(const std::string& name);
std::string to_string(Encoding e);

/// Cells per side of a grid cell in the pixel raster.
inline constexpr int kPixelScale = 5;

/// compact: 19 channels over the grid (body, 16 leg-direction indicators at the
/// body cell, uncollected ingredients, next target). pixel: one grayscale channel
/// at kPixelScale pixels per cell.
Observation overcooked_render(const OverCookedState& state, Encoding encoding);

std::uint64_t state_hash(const OverCookedState& state);

// ---------------------------------------------------------------------------
// MineCraft-lite

enum class Block : std::uint8_t { Air = 0, Grass = 1, Brick = 2, Stone = 3 };

struct MineCraftConfig {
    int size_x = 12;
    int size_y = 12;
    int size_z = 6;
    int episode_length = 1000;
    /// 10 folds jump into forward movement (climbing a one-block step); 11 adds an
    /// explicit jump action.
    int action_count = 10;
    int view_size = 9;
    double view_depth = 8.0;
    bool operator==(const MineCraftConfig&) const = default;
};

enum class MineCraftAction : std::uint8_t {
    Forward = 0,
    Backward = 1,
    StrafeLeft = 2,
    StrafeRight = 3,
    TurnLeft = 4,
    TurnRight = 5,
    LookUp = 6,
    LookDown = 7,
    Break = 8,
    Build = 9,
    Jump = 10,
};

struct VoxelWorld {
    MineCraftConfig config;
    std::vector<Block> blocks;
    std::vector<std::uint8_t> original_broken;  // original solid block at this cell has been broken
    std::vector<std::uint8_t> built;            // cell currently holds a block placed this episode
    int x = 0, y = 0, z = 0;
    int yaw = 0;  // 0 north (-y), 1 east (+x), 2 south (+y), 3 west (-x)
    bool pitch_down = false;
    int steps = 0;
    bool done = false;
    // Counters behind the built-blocks bookkeeping invariant.
    std::uint64_t air_to_solid = 0;
    std::uint64_t built_removed = 0;

    bool in_bounds(int cx, int cy, int cz) const;
    std::size_t index(int cx, int cy, int cz) const;
    Block at(int cx, int cy, int cz) const;
    /// Cell addressed by break/build: the forward neighbour, one lower when looking down.
    std::array<int, 3> faced_cell() const;

    std::size_t valid_breaks() const;
    std::size_t valid_builds() const;

    void save(BinaryWriter& w) const;
    static VoxelWorld load(BinaryReader& r);
    bool operator==(const VoxelWorld&) const = default;
};

VoxelWorld minecraft_reset(const MineCraftConfig& config);
StepOutcome minecraft_step(VoxelWorld& world, std::size_t action);
/// Egocentric first-person map, 2 x K x K: channel 0 is 1 - depth/view_depth of
/// the first block hit along each ray (0 = nothing in range), channel 1 the
/// block kind code (grass 1/3, brick 2/3, stone 1; world boundary 0).
Observation minecraft_render(const VoxelWorld& world);
/// Original blocks broken plus built blocks still standing.
std::size_t valid_operations(const VoxelWorld& world);
std::uint64_t world_hash(const VoxelWorld& world);

// ---------------------------------------------------------------------------
// Common step/reset interface used by trainers.

class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string name() const = 0;
    virtual std::size_t action_count() const = 0;
    virtual std::array<std::size_t, 3> observation_shape() const = 0;
    virtual Observation reset() = 0;
    virtual StepOutcome step(std::size_t action) = 0;
    virtual Observation observe() const = 0;
    /// Extra per-episode figures reported at episode end (e.g. valid_operations).
    virtual std::map<std::string, double> episode_stats() const { return {}; }
    virtual std::uint64_t hash() const = 0;

    virtual void save(BinaryWriter& w) const = 0;
    virtual void load(BinaryReader& r) = 0;
};

/// OverCooked episodes seeded from an owned generator, so a (seed, action list)
/// pair determines the whole multi-episode stream.
class OverCookedEnv final : public Environment {
public:
    OverCookedEnv(OverCookedConfig config, std::uint64_t seed, Encoding encoding = Encoding::Compact);

    std::string name() const override { return "overcooked"; }
    std::size_t action_count() const override { return kOverCookedActions; }
    std::array<std::size_t, 3> observation_shape() const override;
    Observation reset() override;
    StepOutcome step(std::size_t action) override;
    Observation observe() const override { return overcooked_render(state_, encoding_); }
    std::uint64_t hash() const override { return state_hash(state_); }

    const OverCookedState& state() const { return state_; }
    const OverCookedConfig& config() const { return config_; }

    void save(BinaryWriter& w) const override;
    void load(BinaryReader& r) override;

private:
    OverCookedConfig config_;
    Encoding encoding_;
    Rng rng_;
    OverCookedState state_;
};

class MineCraftEnv final : public Environment {
public:
    explicit MineCraftEnv(MineCraftConfig config);

    std::string name() const override { return "minecraft"; }
    std::size_t action_count() const override { return static_cast<std::size_t>(config_.action_count); }
    std::array<std::size_t, 3> observation_shape() const override;
    Observation reset() override;
    StepOutcome step(std::size_t action) override;
    Observation observe() const override { return minecraft_render(world_); }
    std::map<std::string, double> episode_stats() const override;
    std::uint64_t hash() const override { return world_hash(world_); }

    const VoxelWorld& world() const { return world_; }

    void save(BinaryWriter& w) const override;
    void load(BinaryReader& r) override;

private:
    MineCraftConfig config_;
    VoxelWorld world_;
};

// ---------------------------------------------------------------------------
// Trace files: one line per step "step action reward done hash".

struct TraceRecord {
    std::uint64_t step = 0;
    std::size_t action = 0;
    double reward = 0.0;
    bool done = false;
    std::uint64_t hash = 0;
    bool operator==(const TraceRecord&) const = default;
};

void write_trace(std::ostream& out, const std::vector<TraceRecord>& records);
std::vector<TraceRecord> read_trace(std::istream& in);

}  // namespace dehrl
