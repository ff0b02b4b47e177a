#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dehrl/approx.hpp"
#include "dehrl/serialize.hpp"

namespace dehrl {

struct PpoConfig {
    std::size_t horizon = 128;
    std::size_t epochs = 4;
    /// Total samples per minibatch across actors (32 per actor x 8 actors).
    std::size_t minibatch_size = 32 * 8;
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip_epsilon = 0.2;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    std::size_t actors = 8;
    double max_grad_norm = 0.5;
    bool normalize_advantages = true;
    AdamConfig adam;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// On-policy buffer for one level of one actor. Entry t holds the observation the
/// decision was taken on, the conditioning (upper) action, the sampled action, its
/// log-probability and value estimate at sampling time, the reward collected until
/// the decision closed, and whether the episode ended there.
struct Rollout {
    std::vector<Vector> observations;
    std::vector<std::size_t> upper_actions;
    std::vector<std::size_t> actions;
    Vector log_probs;
    Vector values;
    Vector rewards;
    std::vector<std::uint8_t> dones;

    std::size_t size() const { return actions.size(); }
    bool empty() const { return actions.empty(); }
    void push(std::span<const double> observation, std::size_t upper, std::size_t action, double log_prob,
              double value, double reward, bool done);
    void clear();
    /// Throws if sequence lengths disagree or log-probs/rewards are non-finite.
    void validate() const;

    void save(BinaryWriter& w) const;
    static Rollout load(BinaryReader& r);
};

struct GaeResult {
    Vector advantages;
    Vector returns;
};

/// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t, A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}.
/// `values` carries one more entry than `rewards`: the bootstrap value after the cut.
GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
              double gamma, double lambda);

struct CategoricalSample {
    std::size_t action = 0;
    double log_prob = 0.0;
};

void log_softmax(std::span<const double> logits, std::span<double> out);
double categorical_entropy(std::span<const double> logits);
CategoricalSample categorical_sample(std::span<const double> logits, Rng& rng);
/// Index of the largest logit (first on ties).
std::size_t categorical_argmax(std::span<const double> logits);

/// Policy head layout expected by the PPO code: head 0 holds action logits,
/// head 1 the scalar value, both selected by the upper action.
inline constexpr std::size_t kLogitsHead = 0;
inline constexpr std::size_t kValueHead = 1;

struct PpoSample {
    std::span<const double> observation;
    std::size_t upper = 0;
    std::size_t action = 0;
    double old_log_prob = 0.0;
    double advantage = 0.0;
    double target_return = 0.0;
};

struct PpoLoss {
    double policy_loss = 0.0;  // -mean clipped surrogate
    double value_loss = 0.0;   // mean (V - R)^2
    double entropy = 0.0;      // mean entropy
    double total = 0.0;        // policy + c1 value - c2 entropy
    double mean_ratio = 0.0;
    double approx_kl = 0.0;    // mean(old log-prob - new log-prob)
    double clip_fraction = 0.0;
};

/// Minibatch loss and its gradient (accumulated into `grad`, already divided by
/// the batch size). Throws NonFiniteError naming the sample that broke it.
PpoLoss ppo_loss_gradient(const ConditionedModel& policy, std::span<const PpoSample> batch, const PpoConfig& config,
                          std::span<double> grad);

struct PpoStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double mean_ratio = 0.0;
    double clip_fraction = 0.0;
    double grad_norm = 0.0;
    std::size_t samples = 0;
    std::size_t minibatches = 0;
};

/// Runs `epochs` passes of shuffled minibatch Adam steps over every rollout.
/// `bootstrap_values[i]` is the value estimate following the last entry of
/// `rollouts[i]` (ignored when that entry is terminal).
PpoStats ppo_update(ConditionedModel& policy, OptimizerState& optimizer, std::span<const Rollout> rollouts,
                    std::span<const double> bootstrap_values, const PpoConfig& config, Rng& rng);

}  // namespace dehrl
