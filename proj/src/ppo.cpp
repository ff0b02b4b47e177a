#include "dehrl/ppo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dehrl {

void PpoConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("ppo." + msg); };
    if (horizon == 0)
        fail("horizon must be positive");
    if (epochs == 0)
        fail("epochs must be at least 1");
    if (minibatch_size == 0)
        fail("minibatch_size must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0))
        fail("gamma must lie in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
        fail("gae_lambda must lie in [0, 1]");
    if (!(clip_epsilon > 0.0))
        fail("clip_epsilon must be positive");
    if (value_coef < 0.0)
        fail("value_coef must be non-negative");
    if (entropy_coef < 0.0)
        fail("entropy_coef must be non-negative");
    if (actors == 0)
        fail("actors must be positive");
    if (!(adam.step_size > 0.0))
        fail("adam step size must be positive");
}

void Rollout::push(std::span<const double> observation, std::size_t upper, std::size_t action, double log_prob,
                   double value, double reward, bool done) {
    observations.emplace_back(observation.begin(), observation.end());
    upper_actions.push_back(upper);
    actions.push_back(action);
    log_probs.push_back(log_prob);
    values.push_back(value);
    rewards.push_back(reward);
    dones.push_back(done ? 1 : 0);
}

void Rollout::clear() {
    observations.clear();
    upper_actions.clear();
    actions.clear();
    log_probs.clear();
    values.clear();
    rewards.clear();
    dones.clear();
}

void Rollout::validate() const {
    const std::size_t n = actions.size();
    if (observations.size() != n || upper_actions.size() != n || log_probs.size() != n || values.size() != n ||
        rewards.size() != n || dones.size() != n)
        throw std::invalid_argument("Rollout: sequences differ in length");
    for (std::size_t t = 0; t < n; ++t) {
        if (!std::isfinite(log_probs[t]))
            throw NonFiniteError("Rollout: non-finite log-probability", t);
        if (!std::isfinite(rewards[t]))
            throw NonFiniteError("Rollout: non-finite reward", t);
    }
}

void Rollout::save(BinaryWriter& w) const {
    w.tag("ROLL");
    w.write<std::uint64_t>(observations.size());
    for (const auto& o : observations)
        w.write(o);
    std::vector<std::uint64_t> up(upper_actions.begin(), upper_actions.end());
    std::vector<std::uint64_t> ac(actions.begin(), actions.end());
    w.write(up);
    w.write(ac);
    w.write(log_probs);
    w.write(values);
    w.write(rewards);
    w.write(dones);
}

Rollout Rollout::load(BinaryReader& r) {
    r.expect("ROLL");
    Rollout ro;
    const auto n = r.read<std::uint64_t>();
    ro.observations.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i)
        ro.observations.push_back(r.read_vector<double>());
    auto up = r.read_vector<std::uint64_t>();
    auto ac = r.read_vector<std::uint64_t>();
    ro.upper_actions.assign(up.begin(), up.end());
    ro.actions.assign(ac.begin(), ac.end());
    ro.log_probs = r.read_vector<double>();
    ro.values = r.read_vector<double>();
    ro.rewards = r.read_vector<double>();
    ro.dones = r.read_vector<std::uint8_t>();
    ro.validate();
    return ro;
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
              double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n + 1)
        throw std::invalid_argument("gae: values must hold one entry more than rewards (the bootstrap)");
    if (dones.size() != n)
        throw std::invalid_argument("gae: done flags must match rewards in length");
    GaeResult out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double running = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const double live = dones[t] ? 0.0 : 1.0;
        const double delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        running = delta + gamma * lambda * live * running;
        out.advantages[t] = running;
        out.returns[t] = running + values[t];
    }
    return out;
}

void log_softmax(std::span<const double> logits, std::span<double> out) {
    if (logits.empty())
        throw std::invalid_argument("log_softmax: empty logits");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits)
        sum += std::exp(l - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t i = 0; i < logits.size(); ++i)
        out[i] = logits[i] - lse;
}

double categorical_entropy(std::span<const double> logits) {
    Vector lp(logits.size());
    log_softmax(logits, lp);
    double h = 0.0;
    for (double l : lp)
        h -= std::exp(l) * l;
    return std::max(h, 0.0);
}

CategoricalSample categorical_sample(std::span<const double> logits, Rng& rng) {
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (!std::isfinite(logits[i]))
            throw NonFiniteError("categorical_sample: non-finite logit", i);
    Vector lp(logits.size());
    log_softmax(logits, lp);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cdf = 0.0;
    std::size_t pick = logits.size() - 1;
    for (std::size_t i = 0; i < lp.size(); ++i) {
        cdf += std::exp(lp[i]);
        if (u < cdf) {
            pick = i;
            break;
        }
    }
    return {pick, lp[pick]};
}

std::size_t categorical_argmax(std::span<const double> logits) {
    if (logits.empty())
        throw std::invalid_argument("categorical_argmax: empty logits");
    return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

PpoLoss ppo_loss_gradient(const ConditionedModel& policy, std::span<const PpoSample> batch, const PpoConfig& config,
                          std::span<double> grad) {
    PpoLoss loss;
    if (batch.empty())
        return loss;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const std::size_t actions = policy.head_output_dim(kLogitsHead);
    ConditionedModel::Trace trace;
    Vector lp(actions), dlogits(actions);
    double dvalue = 0.0;
    const std::array<std::span<const double>, 2> head_grads{std::span<const double>(dlogits),
                                                            std::span<const double>(&dvalue, 1)};
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const auto& s = batch[n];
        if (s.action >= actions)
            throw std::out_of_range("ppo_loss_gradient: action outside the policy's action space");
        policy.forward(s.observation, s.upper, trace);
        const auto logits = policy.output(trace, kLogitsHead);
        const double value = policy.output(trace, kValueHead)[0];
        log_softmax(logits, lp);

        const double log_ratio = lp[s.action] - s.old_log_prob;
        const double ratio = std::exp(log_ratio);
        const double a = s.advantage;
        const double unclipped = ratio * a;
        const double clipped = std::clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon) * a;
        const double surrogate = std::min(unclipped, clipped);
        double entropy = 0.0;
        for (double l : lp)
            entropy -= std::exp(l) * l;
        const double verr = value - s.target_return;
        const double sample_loss =
            -surrogate + config.value_coef * verr * verr - config.entropy_coef * entropy;
        if (!std::isfinite(sample_loss))
            throw NonFiniteError("ppo: non-finite loss", n);

        loss.policy_loss -= surrogate * inv_n;
        loss.value_loss += verr * verr * inv_n;
        loss.entropy += entropy * inv_n;
        loss.total += sample_loss * inv_n;
        loss.mean_ratio += ratio * inv_n;
        loss.approx_kl -= log_ratio * inv_n;
        // Gradient flows through the ratio only where the unclipped term is the minimum.
        const bool clipped_active = clipped < unclipped;
        if (clipped_active)
            loss.clip_fraction += inv_n;

        for (std::size_t k = 0; k < actions; ++k) {
            const double p = std::exp(lp[k]);
            double g = 0.0;
            if (!clipped_active)
                g -= a * ratio * ((k == s.action ? 1.0 : 0.0) - p);
            // d(-c2 H)/dlogit_k = c2 p_k (log p_k + H)
            g += config.entropy_coef * p * (lp[k] + entropy);
            dlogits[k] = g * inv_n;
        }
        dvalue = 2.0 * config.value_coef * verr * inv_n;
        policy.backward(trace, head_grads, grad);
    }
    return loss;
}

PpoStats ppo_update(ConditionedModel& policy, OptimizerState& optimizer, std::span<const Rollout> rollouts,
                    std::span<const double> bootstrap_values, const PpoConfig& config, Rng& rng) {
    config.validate();
    if (rollouts.size() != bootstrap_values.size())
        throw std::invalid_argument("ppo_update: one bootstrap value per rollout required");

    std::vector<PpoSample> samples;
    Vector advantages;
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        const Rollout& ro = rollouts[i];
        ro.validate();
        if (ro.empty())
            continue;
        Vector values(ro.values);
        values.push_back(bootstrap_values[i]);
        const GaeResult g = gae(ro.rewards, values, ro.dones, config.gamma, config.gae_lambda);
        for (std::size_t t = 0; t < ro.size(); ++t) {
            samples.push_back(
                {ro.observations[t], ro.upper_actions[t], ro.actions[t], ro.log_probs[t], g.advantages[t], g.returns[t]});
            advantages.push_back(g.advantages[t]);
        }
    }
    PpoStats stats;
    stats.samples = samples.size();
    if (samples.empty())
        return stats;

    if (config.normalize_advantages) {
        const double n = static_cast<double>(advantages.size());
        const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
        double var = 0.0;
        for (double a : advantages)
            var += (a - mean) * (a - mean);
        const double sd = std::sqrt(var / std::max(n - 1.0, 1.0));
        for (auto& s : samples)
            s.advantage = (s.advantage - mean) / (sd + 1e-8);
    }

    const std::size_t mb = std::min(config.minibatch_size, samples.size());
    std::vector<std::size_t> order(samples.size());
    std::vector<PpoSample> batch;
    batch.reserve(mb);
    Vector gradient(policy.parameter_count());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += mb) {
            const std::size_t end = std::min(start + mb, order.size());
            batch.clear();
            for (std::size_t k = start; k < end; ++k)
                batch.push_back(samples[order[k]]);
            std::fill(gradient.begin(), gradient.end(), 0.0);
            PpoLoss l;
            try {
                l = ppo_loss_gradient(policy, batch, config, gradient);
            } catch (const NonFiniteError& e) {
                throw NonFiniteError("ppo_update aborted: non-finite loss in minibatch starting at sample",
                                     order[start + e.index()]);
            }
            stats.grad_norm = clip_grad_norm(gradient, config.max_grad_norm);
            adam_step(policy.parameters(), gradient, optimizer);
            stats.policy_loss += l.policy_loss;
            stats.value_loss += l.value_loss;
            stats.entropy += l.entropy;
            stats.approx_kl += l.approx_kl;
            stats.mean_ratio += l.mean_ratio;
            stats.clip_fraction += l.clip_fraction;
            ++stats.minibatches;
        }
    }
    const double inv = 1.0 / static_cast<double>(stats.minibatches);
    stats.policy_loss *= inv;
    stats.value_loss *= inv;
    stats.entropy *= inv;
    stats.approx_kl *= inv;
    stats.mean_ratio *= inv;
    stats.clip_fraction *= inv;
    return stats;
}

}  // namespace dehrl
