#pragma once

#include <cstddef>
#include <cstdint>
#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dehrl/approx.hpp"
#include "dehrl/envs.hpp"
#include "dehrl/ppo.hpp"

namespace dehrl {

/// Raised for hierarchy or run configurations that violate a structural rule.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct LevelSpec {
    std::size_t action_count = 2;
    /// Primitive steps between two decisions of this level.
    std::size_t period = 1;
    /// Weight of the intrinsic reward this level receives from the level above.
    double lambda = 1.0;
};

/// T^0 = 1, every period an integer multiple of the one below, level-0 action count
/// equal to the environment's (when `env_actions` is given), and at least two
/// actions wherever a predictor must produce counterfactuals (levels >= 1).
void validate_levels(std::span<const LevelSpec> levels, std::optional<std::size_t> env_actions = std::nullopt);

enum class BountyMode : std::uint8_t { Min = 0, Sum = 1 };

struct DistanceConfig {
    /// Weight of the mean-L1 term; 1 - alpha weights the centre-of-mass term.
    double alpha = 0.5;
    BountyMode mode = BountyMode::Min;
};

/// Intensity-weighted mean (row, col) over all channels; the grid centre when the
/// tensor has no mass.
std::array<double, 2> center_of_mass(const Observation& s);

/// alpha * L1(s1, s2) / #elements + (1 - alpha) * |CoM(s1) - CoM(s2)| / grid diagonal.
double state_distance(const Observation& s1, const Observation& s2, const DistanceConfig& config);

/// Predicted outcome for every action except `taken` (state head of the predictor).
std::vector<Observation> predict_counterfactuals(const ConditionedModel& predictor, const Observation& state,
                                                 std::size_t taken);

/// Minimum (or, in sum mode, total) distance from the real outcome to the
/// counterfactual outcomes.
double intrinsic_reward_raw(const Observation& real, std::span<const Observation> counterfactuals,
                            const DistanceConfig& config);

/// Centres a raw bounty on the predictor's estimate of its expectation.
inline double normalize_intrinsic(double raw, double expected) { return raw - expected; }

/// Predictor head layout: head 0 predicts the observation T^l steps ahead, head 1
/// the raw bounty the level below will receive.
inline constexpr std::size_t kStateHead = 0;
inline constexpr std::size_t kBountyHead = 1;

struct PredictorLosses {
    double transition = 0.0;  // mean square error over observation elements
    double bounty = 0.0;      // squared error of the bounty estimate
};

/// Both predictor losses for one (s, a, s', b) tuple; when `grad` is non-empty the
/// gradient of (transition + bounty) times `scale` is accumulated into it.
PredictorLosses predictor_losses(const ConditionedModel& predictor, const Observation& state, std::size_t action,
                                 const Observation& next_state, double bounty_raw, std::span<double> grad = {},
                                 double scale = 1.0);

struct NetworkConfig {
    std::vector<std::size_t> policy_hidden{64, 64};
    std::vector<std::size_t> predictor_encoder{64};
    std::vector<std::size_t> predictor_decoder{32};
    /// Init scale of the policy's logits layer, so fresh policies start near uniform.
    double policy_logits_scale = 0.01;
};

ConditionedModel make_policy(std::size_t observation_size, std::size_t action_count, std::size_t upper_count,
                             const NetworkConfig& net, Rng& rng);
ConditionedModel make_predictor(std::size_t observation_size, std::size_t action_count, const NetworkConfig& net,
                                Rng& rng);

/// Extra level-0 reward per primitive transition (exploration baselines).
class ExplorationBonus {
public:
    virtual ~ExplorationBonus() = default;
    virtual std::string kind() const = 0;
    virtual double bonus(const Observation& state, std::size_t action, const Observation& next_state) = 0;
    virtual void save(BinaryWriter& w) const = 0;
    virtual void load(BinaryReader& r) = 0;
};

struct HierarchyConfig {
    std::vector<LevelSpec> levels;
    PpoConfig ppo;
    DistanceConfig distance;
    NetworkConfig network;
    /// Zero the environment reward everywhere (subpolicy discovery runs).
    bool intrinsic_only = false;
    /// Scale applied to the exploration bonus, if one is attached.
    double bonus_scale = 0.1;
    /// Passes over each level's predictor window per training round.
    std::size_t predictor_epochs = 4;
};

using EnvironmentFactory = std::function<std::unique_ptr<Environment>(std::uint64_t seed)>;
using MetricSink = std::function<void(std::uint64_t step, const std::string& key, double value)>;

struct LevelTrainStats {
    std::size_t level = 0;
    PpoStats ppo;
    bool policy_trained = true;
    bool predictor_trained = false;
    double transition_loss = 0.0;
    double bounty_loss = 0.0;
    double bounty_raw_mean = 0.0;
    double bounty_normalized_mean = 0.0;
};

/// A levelwise stack of conditioned policies and action-conditioned predictors
/// driving a set of actors (one environment each). Level l decides every T^l
/// primitive steps; when its macro-step closes the predictor of level l scores
/// the lower level's behaviour against its counterfactual predictions.
class Hierarchy {
public:
    /// Open (not yet closed) decision of one level for one actor.
    struct Decision {
        bool open = false;
        bool record = true;
        Vector start_observation;
        std::size_t upper = 0;
        std::size_t action = 0;
        double log_prob = 0.0;
        double value = 0.0;
        double extrinsic = 0.0;
    };

    struct PredictorSample {
        Vector state;
        std::size_t action = 0;
        Vector next_state;
        double bounty_raw = 0.0;
        double bounty_normalized = 0.0;
    };

    struct Actor {
        std::unique_ptr<Environment> env;
        Observation observation;
        std::uint64_t episode_step = 0;
        bool fresh = true;
        std::vector<Decision> open;
        std::vector<Rollout> rollouts;
        std::vector<std::vector<PredictorSample>> predictor_samples;
        /// Bounty computed for each level when the level above closed, consumed by
        /// that level's own close in the same tick.
        std::vector<std::optional<double>> pending_bounty;
        std::vector<std::uint64_t> decisions;
        /// Action of each level's most recently closed decision.
        std::vector<std::size_t> last_action;
        double episode_reward = 0.0;
        std::uint64_t episode_length = 0;
    };

    struct Level {
        LevelSpec spec;
        ConditionedModel policy;
        OptimizerState policy_optimizer;
        std::optional<ConditionedModel> predictor;
        OptimizerState predictor_optimizer;
    };

    struct EpisodeRecord {
        std::uint64_t index = 0;
        double reward = 0.0;
        std::uint64_t length = 0;
        std::uint64_t step = 0;
        std::map<std::string, double> stats;
    };

    Hierarchy(HierarchyConfig config, EnvironmentFactory factory, std::uint64_t seed);

    const HierarchyConfig& config() const { return config_; }
    std::size_t level_count() const { return levels_.size(); }
    std::size_t top() const { return levels_.size() - 1; }
    const Level& level(std::size_t l) const { return levels_.at(l); }
    Level& level(std::size_t l) { return levels_.at(l); }
    const Actor& actor(std::size_t i) const { return actors_.at(i); }
    std::size_t actor_count() const { return actors_.size(); }
    std::size_t observation_size() const { return observation_size_; }
    std::array<std::size_t, 3> observation_shape() const { return observation_shape_; }
    /// Primitive steps taken so far, summed over actors.
    std::uint64_t total_steps() const { return total_steps_; }
    std::uint64_t episodes_finished() const { return episodes_finished_; }

    void set_metric_sink(MetricSink sink) { sink_ = std::move(sink); }
    void set_exploration_bonus(std::unique_ptr<ExplorationBonus> bonus) { bonus_ = std::move(bonus); }
    const ExplorationBonus* exploration_bonus() const { return bonus_.get(); }
    void set_episode_callback(std::function<void(const EpisodeRecord&)> cb) { on_episode_ = std::move(cb); }

    /// Samples level `l`'s action for (observation, upper action).
    CategoricalSample policy_act(std::size_t l, std::span<const double> observation, std::size_t upper);
    /// Greedy counterpart used by probes.
    std::size_t policy_greedy(std::size_t l, std::span<const double> observation, std::size_t upper) const;
    /// Policy entropy of level `l` on an observation under an upper action.
    double policy_entropy(std::size_t l, std::span<const double> observation, std::size_t upper) const;
    /// Mean entropy of level `l` over the actors' current observations and upper actions.
    double mean_policy_entropy(std::size_t l) const;

    /// Advances every actor by one primitive step, training levels whose pooled
    /// rollouts reach horizon * actors just before they sample again.
    void step();
    /// Trains every level whose rollout is full; returns stats for those that trained.
    std::vector<LevelTrainStats> train_tick();
    /// Re-initializes the top policy and its optimizer, discarding its buffered data.
    void reset_top_level();

    void save(BinaryWriter& w) const;
    void load(BinaryReader& r);

private:
    bool due(const Actor& a, std::size_t l) const;
    std::size_t upper_action(const Actor& a, std::size_t l) const;
    bool level_full(std::size_t l) const;
    LevelTrainStats train_level(std::size_t l);
    void sample_level(Actor& a, std::size_t l);
    void close_level(Actor& a, std::size_t l, bool done);
    void finish_episode(Actor& a);
    void emit(const std::string& key, double value);

    HierarchyConfig config_;
    std::vector<Level> levels_;
    std::vector<Actor> actors_;
    std::size_t observation_size_ = 0;
    std::array<std::size_t, 3> observation_shape_{};
    Rng init_rng_;
    Rng act_rng_;
    Rng train_rng_;
    std::uint64_t total_steps_ = 0;
    std::uint64_t episodes_finished_ = 0;
    MetricSink sink_;
    std::unique_ptr<ExplorationBonus> bonus_;
    std::function<void(const EpisodeRecord&)> on_episode_;
    std::vector<LevelTrainStats> last_train_;
};

}  // namespace dehrl
