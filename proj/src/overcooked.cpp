#include <algorithm>
#include <stdexcept>

#include "dehrl/envs.hpp"

namespace dehrl {

namespace {

constexpr std::array<std::array<int, 2>, 5> kLegDelta{{{0, 0}, {-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
constexpr std::size_t kCompactChannels = 19;

class Fnv1a {
public:
    template <typename T>
    void add(T v) {
        const auto* p = reinterpret_cast<const unsigned char*>(&v);
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            h_ ^= p[i];
            h_ *= 1099511628211ull;
        }
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 14695981039346656037ull;
};

// Ingredient order required by reward level 2 with a fixed goal: the fixed goal
// first, then the remaining ids cyclically.
int fixed_order(const RewardSetting& s, std::size_t position) {
    return static_cast<int>((static_cast<std::size_t>(s.fixed_goal()) + position) % kIngredientCount);
}

}  // namespace

std::string to_string(GoalType g) {
    switch (g) {
    case GoalType::Any:
        return "any";
    case GoalType::Fix:
        return "fix";
    case GoalType::Random:
        return "random";
    }
    return "?";
}

GoalType parse_goal_type(const std::string& name) {
    if (name == "any")
        return GoalType::Any;
    if (name == "fix")
        return GoalType::Fix;
    if (name == "random")
        return GoalType::Random;
    throw std::invalid_argument("unknown goal type '" + name + "' (expected any, fix or random)");
}

RewardSetting::RewardSetting(int reward_level, GoalType goal, int fixed_goal)
    : reward_level_(reward_level), goal_(goal), fixed_goal_(fixed_goal) {
    if (reward_level != 1 && reward_level != 2)
        throw std::invalid_argument("reward_level must be 1 or 2");
    if (fixed_goal < 0 || fixed_goal >= kIngredientCount)
        throw std::invalid_argument("fixed goal ingredient must be in [0, 4)");
}

std::array<int, 2> OverCookedState::ingredient_cell(int id) const {
    const int last = grid_size - 1;
    switch (id) {
    case 0:
        return {0, 0};
    case 1:
        return {0, last};
    case 2:
        return {last, 0};
    case 3:
        return {last, last};
    default:
        throw std::out_of_range("ingredient id outside [0, 4)");
    }
}

int OverCookedState::next_target() const {
    if (setting.goal() == GoalType::Any)
        return -1;
    if (setting.reward_level() == 1)
        return setting.goal() == GoalType::Fix ? setting.fixed_goal() : to_pick[0];
    if (picked.size() >= static_cast<std::size_t>(kIngredientCount))
        return -1;
    return setting.goal() == GoalType::Fix ? fixed_order(setting, picked.size()) : to_pick[picked.size()];
}

void OverCookedState::save(BinaryWriter& w) const {
    w.tag("OVCK");
    w.write(grid_size);
    w.write(step_limit);
    w.write(setting.reward_level());
    w.write(setting.goal());
    w.write(setting.fixed_goal());
    w.write(row);
    w.write(col);
    for (auto l : legs)
        w.write(l);
    for (auto t : to_pick)
        w.write(t);
    for (auto c : collected)
        w.write(static_cast<std::uint8_t>(c));
    w.write(picked);
    w.write(steps);
    w.write(static_cast<std::uint8_t>(done));
}

OverCookedState OverCookedState::load(BinaryReader& r) {
    r.expect("OVCK");
    OverCookedState s;
    s.grid_size = r.read<int>();
    s.step_limit = r.read<int>();
    const int level = r.read<int>();
    const auto goal = r.read<GoalType>();
    const int fixed = r.read<int>();
    s.setting = RewardSetting(level, goal, fixed);
    s.row = r.read<int>();
    s.col = r.read<int>();
    for (auto& l : s.legs)
        l = r.read<LegState>();
    for (auto& t : s.to_pick)
        t = r.read<int>();
    for (auto& c : s.collected)
        c = r.read<std::uint8_t>() != 0;
    s.picked = r.read_vector<int>();
    s.steps = r.read<int>();
    s.done = r.read<std::uint8_t>() != 0;
    return s;
}

OverCookedState overcooked_reset(std::uint64_t seed, const OverCookedConfig& config) {
    if (config.grid_size < 3)
        throw std::invalid_argument("OverCooked grid must be at least 3 cells per side");
    if (config.step_limit <= 0)
        throw std::invalid_argument("OverCooked step limit must be positive");
    OverCookedState s;
    s.grid_size = config.grid_size;
    s.step_limit = config.step_limit;
    s.setting = config.reward;
    s.row = config.grid_size / 2;
    s.col = config.grid_size / 2;
    Rng rng(seed);
    std::shuffle(s.to_pick.begin(), s.to_pick.end(), rng);
    return s;
}

StepOutcome overcooked_step(OverCookedState& s, std::size_t action) {
    if (s.done)
        throw std::logic_error("overcooked_step: episode is already done");
    if (action >= kOverCookedActions)
        throw std::out_of_range("overcooked_step: action " + std::to_string(action) + " outside [0, 16)");

    const std::size_t leg = action / 4;
    const auto dir = static_cast<LegState>(action % 4 + 1);
    s.legs[leg] = dir;
    ++s.steps;

    StepOutcome out;
    const bool aligned = std::all_of(s.legs.begin(), s.legs.end(), [&](LegState l) { return l == dir; });
    if (aligned) {
        const auto& d = kLegDelta[static_cast<std::size_t>(dir)];
        s.row = std::clamp(s.row + d[0], 0, s.grid_size - 1);
        s.col = std::clamp(s.col + d[1], 0, s.grid_size - 1);
        s.legs.fill(LegState::Rest);

        for (int id = 0; id < kIngredientCount; ++id) {
            if (s.collected[id])
                continue;
            const auto cell = s.ingredient_cell(id);
            if (cell[0] != s.row || cell[1] != s.col)
                continue;
            const int wanted = s.next_target();
            s.collected[id] = true;
            s.picked.push_back(id);
            const bool correct = wanted < 0 || wanted == id;
            if (s.setting.reward_level() == 1) {
                out.reward = correct ? 1.0 : 0.0;
                out.done = true;
            } else if (!correct) {
                out.done = true;
            } else if (s.picked.size() == static_cast<std::size_t>(kIngredientCount)) {
                out.reward = 1.0;
                out.done = true;
            }
            break;
        }
    }
    if (!out.done && s.steps >= s.step_limit)
        out.done = true;
    s.done = out.done;
    return out;
}

Encoding parse_encoding(const std::string& name) {
    if (name == "compact")
        return Encoding::Compact;
    if (name == "pixel")
        return Encoding::Pixel;
    throw std::invalid_argument("unknown observation encoding '" + name + "' (expected compact or pixel)");
}

std::string to_string(Encoding e) { return e == Encoding::Compact ? "compact" : "pixel"; }

Observation overcooked_render(const OverCookedState& s, Encoding encoding) {
    const auto n = static_cast<std::size_t>(s.grid_size);
    const int target = s.next_target();
    const auto body_r = static_cast<std::size_t>(s.row);
    const auto body_c = static_cast<std::size_t>(s.col);

    if (encoding == Encoding::Compact) {
        Observation obs(kCompactChannels, n, n);
        obs.at(0, body_r, body_c) = 1.0;
        for (std::size_t leg = 0; leg < 4; ++leg)
            if (s.legs[leg] != LegState::Rest)
                obs.at(1 + leg * 4 + (static_cast<std::size_t>(s.legs[leg]) - 1), body_r, body_c) = 1.0;
        for (int id = 0; id < kIngredientCount; ++id) {
            if (s.collected[id])
                continue;
            const auto cell = s.ingredient_cell(id);
            obs.at(17, static_cast<std::size_t>(cell[0]), static_cast<std::size_t>(cell[1])) = 1.0;
            if (id == target)
                obs.at(18, static_cast<std::size_t>(cell[0]), static_cast<std::size_t>(cell[1])) = 1.0;
        }
        return obs;
    }

    if (encoding != Encoding::Pixel)
        throw std::invalid_argument("unknown observation encoding");
    constexpr std::size_t k = kPixelScale;
    constexpr std::size_t mid = k / 2;
    Observation obs(1, n * k, n * k);
    for (int id = 0; id < kIngredientCount; ++id) {
        if (s.collected[id])
            continue;
        const auto cell = s.ingredient_cell(id);
        const std::size_t r0 = static_cast<std::size_t>(cell[0]) * k, c0 = static_cast<std::size_t>(cell[1]) * k;
        obs.at(0, r0 + mid, c0 + mid) = 0.5;
        if (id == target) {
            obs.at(0, r0 + mid - 1, c0 + mid) = 0.3;
            obs.at(0, r0 + mid + 1, c0 + mid) = 0.3;
            obs.at(0, r0 + mid, c0 + mid - 1) = 0.3;
            obs.at(0, r0 + mid, c0 + mid + 1) = 0.3;
        }
    }
    // Body in the cell centre; each leg is a dot on a diagonal neighbour of the
    // centre, pushed one pixel in its commanded direction.
    const std::size_t r0 = body_r * k + mid, c0 = body_c * k + mid;
    obs.at(0, r0, c0) = 1.0;
    constexpr std::array<std::array<int, 2>, 4> corner{{{-1, -1}, {-1, 1}, {1, -1}, {1, 1}}};
    for (std::size_t leg = 0; leg < 4; ++leg) {
        const auto& d = kLegDelta[static_cast<std::size_t>(s.legs[leg])];
        const auto r = static_cast<std::size_t>(static_cast<int>(r0) + corner[leg][0] + d[0]);
        const auto c = static_cast<std::size_t>(static_cast<int>(c0) + corner[leg][1] + d[1]);
        obs.at(0, r, c) += 0.5;
    }
    return obs;
}

std::uint64_t state_hash(const OverCookedState& s) {
    Fnv1a h;
    h.add(s.grid_size);
    h.add(s.row);
    h.add(s.col);
    for (auto l : s.legs)
        h.add(l);
    for (auto t : s.to_pick)
        h.add(t);
    for (auto c : s.collected)
        h.add(c);
    h.add(s.picked.size());
    for (auto p : s.picked)
        h.add(p);
    h.add(s.steps);
    h.add(s.done);
    return h.value();
}

OverCookedEnv::OverCookedEnv(OverCookedConfig config, std::uint64_t seed, Encoding encoding)
    : config_(config), encoding_(encoding), rng_(seed) {
    state_ = overcooked_reset(rng_(), config_);
}

std::array<std::size_t, 3> OverCookedEnv::observation_shape() const {
    const auto n = static_cast<std::size_t>(config_.grid_size);
    if (encoding_ == Encoding::Compact)
        return {kCompactChannels, n, n};
    return {1, n * kPixelScale, n * kPixelScale};
}

Observation OverCookedEnv::reset() {
    state_ = overcooked_reset(rng_(), config_);
    return observe();
}

StepOutcome OverCookedEnv::step(std::size_t action) { return overcooked_step(state_, action); }

void OverCookedEnv::save(BinaryWriter& w) const {
    w.tag("OENV");
    w.write(rng_);
    state_.save(w);
}

void OverCookedEnv::load(BinaryReader& r) {
    r.expect("OENV");
    r.read(rng_);
    auto s = OverCookedState::load(r);
    if (s.grid_size != config_.grid_size)
        throw FormatError("checkpointed OverCooked grid size differs from the configuration");
    state_ = std::move(s);
}

}  // namespace dehrl
