#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>

#include "dehrl/hierarchy.hpp"

namespace dehrl {

enum class BaselineKind : std::uint8_t { Ppo = 0, StateNovelty = 1, TransitionNovelty = 2 };

std::string to_string(BaselineKind k);
/// Accepts "ppo", "state_novelty", "transition_novelty".
BaselineKind parse_baseline_kind(const std::string& name);

/// Visit counts keyed by an observation hash. Exact bytes by default; with
/// `quantize` set, values are first bucketed to 1/16 (continuous rasters).
class VisitTable {
public:
    explicit VisitTable(bool quantize = false) : quantize_(quantize) {}

    std::uint64_t key(const Observation& obs) const;
    std::uint64_t count(const Observation& obs) const;
    /// Increments the observation's count and returns it.
    std::uint64_t visit(const Observation& obs);
    std::uint64_t total() const { return total_; }
    std::size_t distinct() const { return counts_.size(); }
    bool quantized() const { return quantize_; }
    /// Adds another table's counts into this one.
    void merge(const VisitTable& other);

    void save(BinaryWriter& w) const;
    void load(BinaryReader& r);

private:
    bool quantize_;
    std::unordered_map<std::uint64_t, std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

/// Counts the visit and returns 1/sqrt(count after the increment).
double state_novelty_bonus(VisitTable& table, const Observation& obs);

/// Primitive forward model for the transition-novelty baseline: the predictor
/// architecture with T = 1 over environment actions.
class ForwardModel {
public:
    ForwardModel(std::size_t observation_size, std::size_t action_count, const NetworkConfig& net,
                 AdamConfig adam, Rng& rng);

    /// Mean square error of the predicted s' (no update).
    double error(const Observation& s, std::size_t a, const Observation& next) const;
    /// Error before one Adam step on the transition loss.
    double train(const Observation& s, std::size_t a, const Observation& next);

    ConditionedModel& model() { return model_; }
    const ConditionedModel& model() const { return model_; }
    const OptimizerState& optimizer() const { return optimizer_; }

    void save(BinaryWriter& w) const;
    void load(BinaryReader& r);

private:
    ConditionedModel model_;
    OptimizerState optimizer_;
};

/// Prediction error of s' under the model, after which the model is trained
/// one step on (s, a, s').
double transition_novelty_bonus(ForwardModel& model, const Observation& s, std::size_t a, const Observation& next);

class StateNoveltyBonus final : public ExplorationBonus {
public:
    explicit StateNoveltyBonus(bool quantize) : table_(quantize) {}
    std::string kind() const override { return "state_novelty"; }
    double bonus(const Observation&, std::size_t, const Observation& next) override {
        return state_novelty_bonus(table_, next);
    }
    const VisitTable& table() const { return table_; }
    void save(BinaryWriter& w) const override { table_.save(w); }
    void load(BinaryReader& r) override { table_.load(r); }

private:
    VisitTable table_;
};

class TransitionNoveltyBonus final : public ExplorationBonus {
public:
    explicit TransitionNoveltyBonus(ForwardModel model) : model_(std::move(model)) {}
    std::string kind() const override { return "transition_novelty"; }
    double bonus(const Observation& s, std::size_t a, const Observation& next) override {
        return transition_novelty_bonus(model_, s, a, next);
    }
    const ForwardModel& model() const { return model_; }
    void save(BinaryWriter& w) const override { model_.save(w); }
    void load(BinaryReader& r) override { model_.load(r); }

private:
    ForwardModel model_;
};

/// Single-level, lambda = 0 hierarchy config for a baseline on an environment
/// with `env_actions` primitive actions.
HierarchyConfig baseline_config(const HierarchyConfig& base, std::size_t env_actions);

/// Bonus object for `kind` (nullptr for plain PPO). `seed` drives the forward
/// model initialisation of the transition-novelty baseline.
std::unique_ptr<ExplorationBonus> make_bonus(BaselineKind kind, std::size_t observation_size,
                                             std::size_t action_count, bool quantize, const NetworkConfig& net,
                                             AdamConfig adam, std::uint64_t seed);

}  // namespace dehrl
