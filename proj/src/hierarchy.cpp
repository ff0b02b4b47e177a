#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dehrl/hierarchy.hpp"

namespace dehrl {

void validate_levels(std::span<const LevelSpec> levels, std::optional<std::size_t> env_actions) {
    if (levels.empty())
        throw ConfigError("hierarchy needs at least one level");
    if (levels[0].period != 1)
        throw ConfigError("level 0 period must be 1 (got " + std::to_string(levels[0].period) + ")");
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& s = levels[l];
        const std::string name = "level " + std::to_string(l);
        if (s.action_count == 0)
            throw ConfigError(name + " has no actions");
        if (!std::isfinite(s.lambda))
            throw ConfigError(name + " lambda is not finite");
        if (l == 0)
            continue;
        if (s.period == 0 || s.period % levels[l - 1].period != 0)
            throw ConfigError(name + " period " + std::to_string(s.period) +
                              " is not an integer multiple of level " + std::to_string(l - 1) + " period " +
                              std::to_string(levels[l - 1].period));
        if (s.action_count < 2)
            throw ConfigError(name + " needs at least 2 actions so its predictor has counterfactuals");
    }
    if (env_actions && levels[0].action_count != *env_actions)
        throw ConfigError("level 0 action count " + std::to_string(levels[0].action_count) +
                          " differs from the environment's " + std::to_string(*env_actions));
}

std::array<double, 2> center_of_mass(const Observation& s) {
    double mass = 0.0, r = 0.0, c = 0.0;
    for (std::size_t ch = 0; ch < s.channels; ++ch)
        for (std::size_t i = 0; i < s.height; ++i)
            for (std::size_t j = 0; j < s.width; ++j) {
                const double v = s.at(ch, i, j);
                mass += v;
                r += v * static_cast<double>(i);
                c += v * static_cast<double>(j);
            }
    if (mass <= 0.0)
        return {(static_cast<double>(s.height) - 1.0) / 2.0, (static_cast<double>(s.width) - 1.0) / 2.0};
    return {r / mass, c / mass};
}

double state_distance(const Observation& s1, const Observation& s2, const DistanceConfig& config) {
    if (!s1.same_shape(s2))
        throw std::invalid_argument("state_distance: observation shapes differ");
    if (s1.size() == 0)
        throw std::invalid_argument("state_distance: empty observation");
    double l1 = 0.0;
    for (std::size_t i = 0; i < s1.size(); ++i)
        l1 += std::abs(s1.data[i] - s2.data[i]);
    l1 /= static_cast<double>(s1.size());

    const double diag =
        std::hypot(static_cast<double>(s1.height) - 1.0, static_cast<double>(s1.width) - 1.0);
    double com = 0.0;
    if (diag > 0.0) {
        const auto a = center_of_mass(s1);
        const auto b = center_of_mass(s2);
        com = std::hypot(a[0] - b[0], a[1] - b[1]) / diag;
    }
    return config.alpha * l1 + (1.0 - config.alpha) * com;
}

namespace {

std::vector<Observation> counterfactuals_from(const ConditionedModel& predictor, std::span<const double> encoding,
                                              const Observation& shape, std::size_t taken) {
    std::vector<Observation> out;
    out.reserve(predictor.action_count() - 1);
    for (std::size_t a = 0; a < predictor.action_count(); ++a) {
        if (a == taken)
            continue;
        Observation o(shape.channels, shape.height, shape.width);
        o.data = predictor.head_forward(encoding, a, kStateHead);
        out.push_back(std::move(o));
    }
    return out;
}

Observation shaped(const std::array<std::size_t, 3>& shape, Vector data) {
    Observation o;
    o.channels = shape[0];
    o.height = shape[1];
    o.width = shape[2];
    o.data = std::move(data);
    return o;
}

}  // namespace

std::vector<Observation> predict_counterfactuals(const ConditionedModel& predictor, const Observation& state,
                                                 std::size_t taken) {
    if (predictor.action_count() < 2)
        throw std::invalid_argument("predict_counterfactuals: predictor has fewer than 2 actions");
    if (taken >= predictor.action_count())
        throw std::out_of_range("predict_counterfactuals: taken action out of range");
    if (state.size() != predictor.input_dim() || predictor.head_output_dim(kStateHead) != state.size())
        throw std::invalid_argument("predict_counterfactuals: observation size does not match the predictor");
    const Vector enc = predictor.encode(state.data);
    return counterfactuals_from(predictor, enc, state, taken);
}

double intrinsic_reward_raw(const Observation& real, std::span<const Observation> counterfactuals,
                            const DistanceConfig& config) {
    if (counterfactuals.empty())
        throw std::invalid_argument("intrinsic_reward_raw: no counterfactual outcomes");
    double acc = config.mode == BountyMode::Min ? INFINITY : 0.0;
    for (const auto& cf : counterfactuals) {
        const double d = state_distance(real, cf, config);
        acc = config.mode == BountyMode::Min ? std::min(acc, d) : acc + d;
    }
    return acc;
}

PredictorLosses predictor_losses(const ConditionedModel& predictor, const Observation& state, std::size_t action,
                                 const Observation& next_state, double bounty_raw, std::span<double> grad,
                                 double scale) {
    if (state.size() != predictor.input_dim() || next_state.size() != predictor.head_output_dim(kStateHead))
        throw std::invalid_argument("predictor_losses: observation size does not match the predictor");
    ConditionedModel::Trace trace;
    predictor.forward(state.data, action, trace);
    const auto pred = predictor.output(trace, kStateHead);
    const auto est = predictor.output(trace, kBountyHead);

    PredictorLosses out;
    const auto n = static_cast<double>(pred.size());
    Vector d_state(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - next_state.data[i];
        out.transition += e * e;
        d_state[i] = 2.0 * e / n * scale;
    }
    out.transition /= n;
    const double be = est[0] - bounty_raw;
    out.bounty = be * be;
    if (!std::isfinite(out.transition) || !std::isfinite(out.bounty))
        throw NonFiniteError("predictor loss is not finite", 0);

    if (!grad.empty()) {
        const double d_bounty = 2.0 * be * scale;
        const std::span<const double> heads[2] = {d_state, std::span<const double>(&d_bounty, 1)};
        predictor.backward(trace, heads, grad);
    }
    return out;
}

ConditionedModel make_policy(std::size_t observation_size, std::size_t action_count, std::size_t upper_count,
                             const NetworkConfig& net, Rng& rng) {
    ConditionedSpec spec;
    spec.input_dim = observation_size;
    spec.encoder_hidden = net.policy_hidden;
    spec.action_count = upper_count;
    spec.conditioning = Conditioning::HeadSelect;
    spec.heads = {HeadSpec{{}, action_count, Activation::Identity, net.policy_logits_scale},
                  HeadSpec{{}, 1, Activation::Identity, 1.0}};
    return ConditionedModel(spec, rng);
}

ConditionedModel make_predictor(std::size_t observation_size, std::size_t action_count, const NetworkConfig& net,
                                Rng& rng) {
    ConditionedSpec spec;
    spec.input_dim = observation_size;
    spec.encoder_hidden = net.predictor_encoder;
    spec.action_count = action_count;
    spec.conditioning = Conditioning::Multiplicative;
    spec.heads = {HeadSpec{net.predictor_decoder, observation_size, Activation::Logistic, 1.0},
                  HeadSpec{net.predictor_decoder, 1, Activation::Identity, 1.0}};
    return ConditionedModel(spec, rng);
}

// ---------------------------------------------------------------------------

Hierarchy::Hierarchy(HierarchyConfig config, EnvironmentFactory factory, std::uint64_t seed)
    : config_(std::move(config)) {
    config_.ppo.validate();
    if (!factory)
        throw ConfigError("hierarchy needs an environment factory");
    if (!(config_.distance.alpha >= 0.0 && config_.distance.alpha <= 1.0))
        throw ConfigError("distance alpha must lie in [0, 1]");
    if (config_.predictor_epochs == 0)
        throw ConfigError("predictor_epochs must be positive");

    Rng base(seed);
    init_rng_ = Rng(base());
    act_rng_ = Rng(base());
    train_rng_ = Rng(base());

    const std::size_t n_levels = config_.levels.size();
    actors_.resize(config_.ppo.actors);
    for (auto& a : actors_) {
        a.env = factory(base());
        if (!a.env)
            throw ConfigError("environment factory returned nothing");
    }
    validate_levels(config_.levels, actors_[0].env->action_count());
    observation_shape_ = actors_[0].env->observation_shape();
    observation_size_ = observation_shape_[0] * observation_shape_[1] * observation_shape_[2];

    for (std::size_t l = 0; l < n_levels; ++l) {
        const auto& spec = config_.levels[l];
        const std::size_t upper = l + 1 < n_levels ? config_.levels[l + 1].action_count : 1;
        Level level{spec, make_policy(observation_size_, spec.action_count, upper, config_.network, init_rng_), {},
                    std::nullopt, {}};
        level.policy_optimizer = OptimizerState(level.policy.parameter_count(), config_.ppo.adam);
        if (l >= 1) {
            level.predictor = make_predictor(observation_size_, spec.action_count, config_.network, init_rng_);
            level.predictor_optimizer = OptimizerState(level.predictor->parameter_count(), config_.ppo.adam);
        }
        levels_.push_back(std::move(level));
    }

    for (auto& a : actors_) {
        a.observation = a.env->reset();
        a.open.resize(n_levels);
        a.rollouts.resize(n_levels);
        a.predictor_samples.resize(n_levels);
        a.pending_bounty.resize(n_levels);
        a.decisions.assign(n_levels, 0);
        a.last_action.assign(n_levels, 0);
    }
}

CategoricalSample Hierarchy::policy_act(std::size_t l, std::span<const double> observation, std::size_t upper) {
    const auto out = levels_.at(l).policy.forward(observation, upper);
    return categorical_sample(out[kLogitsHead], act_rng_);
}

std::size_t Hierarchy::policy_greedy(std::size_t l, std::span<const double> observation, std::size_t upper) const {
    const auto out = levels_.at(l).policy.forward(observation, upper);
    return categorical_argmax(out[kLogitsHead]);
}

double Hierarchy::policy_entropy(std::size_t l, std::span<const double> observation, std::size_t upper) const {
    const auto out = levels_.at(l).policy.forward(observation, upper);
    return categorical_entropy(out[kLogitsHead]);
}

double Hierarchy::mean_policy_entropy(std::size_t l) const {
    double total = 0.0;
    for (const auto& a : actors_)
        total += policy_entropy(l, a.observation.data, upper_action(a, l));
    return total / static_cast<double>(actors_.size());
}

bool Hierarchy::due(const Actor& a, std::size_t l) const { return !a.open[l].open; }

std::size_t Hierarchy::upper_action(const Actor& a, std::size_t l) const {
    if (l == top())
        return 0;
    return a.open[l + 1].open ? a.open[l + 1].action : a.last_action[l + 1];
}

bool Hierarchy::level_full(std::size_t l) const {
    std::size_t n = 0;
    for (const auto& a : actors_)
        n += a.rollouts[l].size();
    return n >= config_.ppo.horizon * actors_.size();
}

void Hierarchy::sample_level(Actor& a, std::size_t l) {
    const std::size_t upper = upper_action(a, l);
    const auto out = levels_[l].policy.forward(a.observation.data, upper);
    const auto s = categorical_sample(out[kLogitsHead], act_rng_);
    Decision& d = a.open[l];
    d.open = true;
    d.record = true;
    d.start_observation = a.observation.data;
    d.upper = upper;
    d.action = s.action;
    d.log_prob = s.log_prob;
    d.value = out[kValueHead][0];
    d.extrinsic = 0.0;
    ++a.decisions[l];
}

void Hierarchy::close_level(Actor& a, std::size_t l, bool done) {
    Decision& d = a.open[l];
    double reward = d.extrinsic;
    if (a.pending_bounty[l]) {
        reward += levels_[l].spec.lambda * *a.pending_bounty[l];
        a.pending_bounty[l].reset();
    }
    if (l >= 1) {
        const auto& pred = *levels_[l].predictor;
        const Vector enc = pred.encode(d.start_observation);
        const Observation start = shaped(observation_shape_, d.start_observation);
        const auto cfs = counterfactuals_from(pred, enc, start, d.action);
        const double raw = intrinsic_reward_raw(a.observation, cfs, config_.distance);
        const double expected = pred.head_forward(enc, d.action, kBountyHead)[0];
        const double norm = normalize_intrinsic(raw, expected);
        a.pending_bounty[l - 1] = norm;
        a.predictor_samples[l].push_back({d.start_observation, d.action, a.observation.data, raw, norm});
    }
    if (d.record)
        a.rollouts[l].push(d.start_observation, d.upper, d.action, d.log_prob, d.value, reward, done);
    a.last_action[l] = d.action;
    d.open = false;
}

void Hierarchy::finish_episode(Actor& a) {
    EpisodeRecord rec{episodes_finished_, a.episode_reward, a.episode_length, total_steps_, a.env->episode_stats()};
    emit("episode_reward", rec.reward);
    emit("episode_length", static_cast<double>(rec.length));
    for (const auto& [k, v] : rec.stats)
        emit(k, v);
    ++episodes_finished_;
    if (on_episode_)
        on_episode_(rec);

    a.observation = a.env->reset();
    a.fresh = true;
    a.episode_step = 0;
    a.episode_reward = 0.0;
    a.episode_length = 0;
    for (auto& p : a.pending_bounty)
        p.reset();
}

void Hierarchy::emit(const std::string& key, double value) {
    if (sink_)
        sink_(total_steps_, key, value);
}

LevelTrainStats Hierarchy::train_level(std::size_t l) {
    Level& level = levels_[l];
    LevelTrainStats stats;
    stats.level = l;

    std::vector<Rollout> rollouts;
    Vector bootstrap;
    for (auto& a : actors_) {
        if (a.rollouts[l].empty())
            continue;
        double v = 0.0;
        if (a.open[l].open)
            v = a.open[l].value;
        else
            v = level.policy.forward(a.observation.data, upper_action(a, l))[kValueHead][0];
        bootstrap.push_back(v);
        rollouts.push_back(std::move(a.rollouts[l]));
        a.rollouts[l].clear();
    }
    // Without extrinsic reward nothing ever pays the top level; PPO on its all-zero
    // returns would only amplify value noise (normalized advantages) and collapse
    // the choice of subpolicy, so it keeps its initial near-uniform policy.
    const bool reward_free = config_.intrinsic_only && l == top() && !(l == 0 && bonus_);
    stats.policy_trained = !reward_free;
    if (!reward_free)
        stats.ppo = ppo_update(level.policy, level.policy_optimizer, rollouts, bootstrap, config_.ppo, train_rng_);

    if (level.predictor) {
        std::vector<PredictorSample> samples;
        for (auto& a : actors_) {
            for (auto& s : a.predictor_samples[l])
                samples.push_back(std::move(s));
            a.predictor_samples[l].clear();
        }
        if (!samples.empty()) {
            auto& pred = *level.predictor;
            std::vector<std::size_t> order(samples.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            const std::size_t mb = std::min(config_.ppo.minibatch_size, samples.size());
            Vector g(pred.parameter_count());
            double transition = 0.0, bounty = 0.0;
            std::size_t counted = 0;
            for (std::size_t epoch = 0; epoch < config_.predictor_epochs; ++epoch) {
                std::shuffle(order.begin(), order.end(), train_rng_);
                for (std::size_t start = 0; start < order.size(); start += mb) {
                    const std::size_t end = std::min(order.size(), start + mb);
                    std::fill(g.begin(), g.end(), 0.0);
                    const double scale = 1.0 / static_cast<double>(end - start);
                    for (std::size_t k = start; k < end; ++k) {
                        const auto& s = samples[order[k]];
                        PredictorLosses loss;
                        try {
                            loss = predictor_losses(pred, shaped(observation_shape_, s.state), s.action,
                                                    shaped(observation_shape_, s.next_state), s.bounty_raw, g,
                                                    scale);
                        } catch (const NonFiniteError&) {
                            throw NonFiniteError("level " + std::to_string(l) + " predictor loss is not finite",
                                                 order[k]);
                        }
                        if (epoch + 1 == config_.predictor_epochs) {
                            transition += loss.transition;
                            bounty += loss.bounty;
                            ++counted;
                        }
                    }
                    clip_grad_norm(g, config_.ppo.max_grad_norm);
                    adam_step(pred.parameters(), g, level.predictor_optimizer);
                }
            }
            double raw = 0.0, norm = 0.0;
            for (const auto& s : samples) {
                raw += s.bounty_raw;
                norm += s.bounty_normalized;
            }
            stats.predictor_trained = true;
            stats.transition_loss = transition / static_cast<double>(counted);
            stats.bounty_loss = bounty / static_cast<double>(counted);
            stats.bounty_raw_mean = raw / static_cast<double>(samples.size());
            stats.bounty_normalized_mean = norm / static_cast<double>(samples.size());
        }
    }

    const std::string p = "level" + std::to_string(l) + "/";
    if (stats.policy_trained) {
        emit(p + "policy_loss", stats.ppo.policy_loss);
        emit(p + "value_loss", stats.ppo.value_loss);
        emit(p + "entropy", stats.ppo.entropy);
        emit(p + "approx_kl", stats.ppo.approx_kl);
    }
    if (stats.predictor_trained) {
        emit(p + "transition_loss", stats.transition_loss);
        emit(p + "bounty_loss", stats.bounty_loss);
        emit(p + "bounty_raw", stats.bounty_raw_mean);
        emit(p + "bounty_normalized", stats.bounty_normalized_mean);
    }
    return stats;
}

std::vector<LevelTrainStats> Hierarchy::train_tick() {
    std::vector<LevelTrainStats> out;
    for (std::size_t l = levels_.size(); l-- > 0;)
        if (level_full(l))
            out.push_back(train_level(l));
    return out;
}

void Hierarchy::step() {
    last_train_.clear();
    for (std::size_t l = levels_.size(); l-- > 0;) {
        if (level_full(l))
            last_train_.push_back(train_level(l));
        for (auto& a : actors_)
            if (due(a, l))
                sample_level(a, l);
    }

    for (auto& a : actors_) {
        a.fresh = false;
        const std::size_t action = a.open[0].action;
        Observation before;
        if (bonus_)
            before = a.observation;
        const StepOutcome out = a.env->step(action);
        a.observation = a.env->observe();
        a.episode_reward += out.reward;
        ++a.episode_length;
        ++a.episode_step;
        ++total_steps_;

        const double r = config_.intrinsic_only ? 0.0 : out.reward;
        for (auto& d : a.open)
            if (d.open)
                d.extrinsic += r;
        if (bonus_)
            a.open[0].extrinsic += config_.bonus_scale * bonus_->bonus(before, action, a.observation);

        for (std::size_t l = levels_.size(); l-- > 0;)
            if (a.open[l].open && (out.done || a.episode_step % levels_[l].spec.period == 0))
                close_level(a, l, out.done);
        if (out.done)
            finish_episode(a);
    }
}

void Hierarchy::reset_top_level() {
    Level& lv = levels_[top()];
    lv.policy.reinitialize(init_rng_);
    lv.policy_optimizer = OptimizerState(lv.policy.parameter_count(), config_.ppo.adam);
    for (auto& a : actors_) {
        a.rollouts[top()].clear();
        a.open[top()].record = false;
    }
}

// ---------------------------------------------------------------------------

void Hierarchy::save(BinaryWriter& w) const {
    w.tag("HIER");
    w.write<std::uint64_t>(levels_.size());
    w.write<std::uint64_t>(actors_.size());
    w.write<std::uint64_t>(observation_size_);
    w.write(init_rng_);
    w.write(act_rng_);
    w.write(train_rng_);
    w.write(total_steps_);
    w.write(episodes_finished_);
    for (const auto& lv : levels_) {
        lv.policy.save(w);
        lv.policy_optimizer.save(w);
        w.write<std::uint8_t>(lv.predictor ? 1 : 0);
        if (lv.predictor) {
            lv.predictor->save(w);
            lv.predictor_optimizer.save(w);
        }
    }
    for (const auto& a : actors_) {
        w.tag("ACTR");
        a.env->save(w);
        w.write(a.observation.data);
        w.write(a.episode_step);
        w.write<std::uint8_t>(a.fresh);
        w.write(a.episode_reward);
        w.write(a.episode_length);
        for (std::size_t l = 0; l < levels_.size(); ++l) {
            const Decision& d = a.open[l];
            w.write<std::uint8_t>(d.open);
            w.write<std::uint8_t>(d.record);
            w.write(d.start_observation);
            w.write<std::uint64_t>(d.upper);
            w.write<std::uint64_t>(d.action);
            w.write(d.log_prob);
            w.write(d.value);
            w.write(d.extrinsic);
            a.rollouts[l].save(w);
            w.write<std::uint64_t>(a.predictor_samples[l].size());
            for (const auto& s : a.predictor_samples[l]) {
                w.write(s.state);
                w.write<std::uint64_t>(s.action);
                w.write(s.next_state);
                w.write(s.bounty_raw);
                w.write(s.bounty_normalized);
            }
            w.write<std::uint8_t>(a.pending_bounty[l].has_value());
            w.write(a.pending_bounty[l].value_or(0.0));
            w.write(a.decisions[l]);
            w.write<std::uint64_t>(a.last_action[l]);
        }
    }
    w.write<std::uint8_t>(bonus_ ? 1 : 0);
    if (bonus_) {
        w.write(bonus_->kind());
        bonus_->save(w);
    }
}

void Hierarchy::load(BinaryReader& r) {
    r.expect("HIER");
    if (r.read<std::uint64_t>() != levels_.size())
        throw FormatError("checkpoint level count differs from the configuration");
    if (r.read<std::uint64_t>() != actors_.size())
        throw FormatError("checkpoint actor count differs from the configuration");
    if (r.read<std::uint64_t>() != observation_size_)
        throw FormatError("checkpoint observation size differs from the configuration");
    r.read(init_rng_);
    r.read(act_rng_);
    r.read(train_rng_);
    total_steps_ = r.read<std::uint64_t>();
    episodes_finished_ = r.read<std::uint64_t>();
    for (auto& lv : levels_) {
        auto policy = ConditionedModel::load(r);
        if (policy.parameter_count() != lv.policy.parameter_count())
            throw FormatError("checkpoint policy shape differs from the configuration");
        lv.policy = std::move(policy);
        lv.policy_optimizer = OptimizerState::load(r);
        const bool has_pred = r.read<std::uint8_t>() != 0;
        if (has_pred != lv.predictor.has_value())
            throw FormatError("checkpoint predictor layout differs from the configuration");
        if (has_pred) {
            lv.predictor = ConditionedModel::load(r);
            lv.predictor_optimizer = OptimizerState::load(r);
        }
    }
    for (auto& a : actors_) {
        r.expect("ACTR");
        a.env->load(r);
        a.observation = shaped(observation_shape_, r.read_vector<double>());
        if (a.observation.size() != observation_size_)
            throw FormatError("checkpoint observation has the wrong size");
        a.episode_step = r.read<std::uint64_t>();
        a.fresh = r.read<std::uint8_t>() != 0;
        a.episode_reward = r.read<double>();
        a.episode_length = r.read<std::uint64_t>();
        for (std::size_t l = 0; l < levels_.size(); ++l) {
            Decision& d = a.open[l];
            d.open = r.read<std::uint8_t>() != 0;
            d.record = r.read<std::uint8_t>() != 0;
            d.start_observation = r.read_vector<double>();
            d.upper = r.read<std::uint64_t>();
            d.action = r.read<std::uint64_t>();
            d.log_prob = r.read<double>();
            d.value = r.read<double>();
            d.extrinsic = r.read<double>();
            a.rollouts[l] = Rollout::load(r);
            const auto n = r.read<std::uint64_t>();
            a.predictor_samples[l].clear();
            for (std::uint64_t i = 0; i < n; ++i) {
                PredictorSample s;
                s.state = r.read_vector<double>();
                s.action = r.read<std::uint64_t>();
                s.next_state = r.read_vector<double>();
                s.bounty_raw = r.read<double>();
                s.bounty_normalized = r.read<double>();
                a.predictor_samples[l].push_back(std::move(s));
            }
            const bool has = r.read<std::uint8_t>() != 0;
            const double v = r.read<double>();
            a.pending_bounty[l] = has ? std::optional<double>(v) : std::nullopt;
            a.decisions[l] = r.read<std::uint64_t>();
            a.last_action[l] = r.read<std::uint64_t>();
        }
    }
    const bool has_bonus = r.read<std::uint8_t>() != 0;
    if (has_bonus != (bonus_ != nullptr))
        throw FormatError("checkpoint exploration bonus presence differs from the configuration");
    if (has_bonus) {
        if (r.read_string() != bonus_->kind())
            throw FormatError("checkpoint exploration bonus kind differs from the configuration");
        bonus_->load(r);
    }
}

}  // namespace dehrl
