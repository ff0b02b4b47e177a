#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "dehrl/ppo.hpp"
#include "support.hpp"

using namespace dehrl;

namespace {

ConditionedModel small_policy(std::size_t input, std::size_t actions, std::size_t uppers, std::uint64_t seed,
                              double logits_scale = 1.0) {
    Rng rng(seed);
    ConditionedSpec spec;
    spec.input_dim = input;
    spec.encoder_hidden = {6};
    spec.action_count = uppers;
    spec.conditioning = Conditioning::HeadSelect;
    spec.heads = {HeadSpec{{}, actions, Activation::Identity, logits_scale},
                  HeadSpec{{}, 1, Activation::Identity, 1.0}};
    return ConditionedModel(spec, rng);
}

// A_t = sum_k (gamma lambda)^k delta_{t+k}, the sum stopping after a done flag.
Vector brute_force_advantages(const Vector& r, const Vector& v, const std::vector<std::uint8_t>& d, double gamma,
                              double lambda) {
    const std::size_t n = r.size();
    Vector a(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        double w = 1.0;
        for (std::size_t k = t; k < n; ++k) {
            const double delta = r[k] + gamma * v[k + 1] * (d[k] ? 0.0 : 1.0) - v[k];
            a[t] += w * delta;
            if (d[k])
                break;
            w *= gamma * lambda;
        }
    }
    return a;
}

double log_prob_of(const ConditionedModel& p, std::span<const double> obs, std::size_t upper, std::size_t action) {
    const auto out = p.forward(obs, upper);
    Vector lp(out[kLogitsHead].size());
    log_softmax(out[kLogitsHead], lp);
    return lp[action];
}

}  // namespace

TEST_CASE("gae: zero rewards and values give zero advantages") {
    const Vector r(7, 0.0), v(8, 0.0);
    const std::vector<std::uint8_t> d{0, 0, 1, 0, 0, 0, 0};
    const auto g = gae(r, v, d, 0.99, 0.95);
    CHECK(g.advantages == Vector(7, 0.0));
    CHECK(g.returns == Vector(7, 0.0));
}

TEST_CASE("gae: lambda 1 with zero values is the discounted return") {
    const Vector r{1.0, 0.0, 2.0, -1.0, 0.5};
    const Vector v(6, 0.0);
    const std::vector<std::uint8_t> d(5, 0);
    const double gamma = 0.9;
    const auto g = gae(r, v, d, gamma, 1.0);
    for (std::size_t t = 0; t < r.size(); ++t) {
        double ret = 0.0, w = 1.0;
        for (std::size_t k = t; k < r.size(); ++k, w *= gamma)
            ret += w * r[k];
        CHECK(g.advantages[t] == doctest::Approx(ret).epsilon(1e-14));
    }
}

TEST_CASE("gae matches the brute-force double sum on random 10-step rollouts") {
    std::mt19937_64 rng(11);
    std::bernoulli_distribution done(0.2);
    for (int trial = 0; trial < 200; ++trial) {
        const Vector r = testing::random_vector(10, rng, -2.0, 2.0);
        const Vector v = testing::random_vector(11, rng, -3.0, 3.0);
        std::vector<std::uint8_t> d(10);
        for (auto& x : d)
            x = done(rng) ? 1 : 0;
        const double gamma = 0.99, lambda = 0.95;
        const auto g = gae(r, v, d, gamma, lambda);
        const Vector oracle = brute_force_advantages(r, v, d, gamma, lambda);
        for (std::size_t t = 0; t < 10; ++t) {
            CHECK(g.advantages[t] == doctest::Approx(oracle[t]).epsilon(1e-12));
            CHECK(g.returns[t] == doctest::Approx(oracle[t] + v[t]).epsilon(1e-12));
        }
    }
}

TEST_CASE("gae with lambda 0 is the one-step TD error") {
    std::mt19937_64 rng(5);
    const Vector r = testing::random_vector(10, rng);
    const Vector v = testing::random_vector(11, rng);
    const std::vector<std::uint8_t> d{0, 1, 0, 0, 0, 1, 0, 0, 0, 0};
    const auto g = gae(r, v, d, 0.99, 0.0);
    for (std::size_t t = 0; t < 10; ++t)
        CHECK(g.advantages[t] == r[t] + 0.99 * v[t + 1] * (d[t] ? 0.0 : 1.0) - v[t]);
}

TEST_CASE("gae advantage stream resets across done flags") {
    const Vector r{0.0, 0.0, 0.0, 5.0};
    const Vector v(5, 0.0);
    const std::vector<std::uint8_t> d{0, 1, 0, 0};
    const auto g = gae(r, v, d, 0.99, 0.95);
    CHECK(g.advantages[0] == 0.0);
    CHECK(g.advantages[1] == 0.0);
    CHECK(g.advantages[2] > 0.0);
}

TEST_CASE("gae rejects length mismatches") {
    const Vector r(4, 0.0);
    const std::vector<std::uint8_t> d(4, 0);
    CHECK_THROWS_AS(gae(r, Vector(4, 0.0), d, 0.99, 0.95), std::invalid_argument);
    CHECK_THROWS_AS(gae(r, Vector(5, 0.0), std::vector<std::uint8_t>(3, 0), 0.99, 0.95), std::invalid_argument);
}

TEST_CASE("categorical: (+10, -10) picks arm 0 almost always") {
    Rng rng(1);
    const Vector logits{10.0, -10.0};
    int zero = 0;
    for (int i = 0; i < 10000; ++i)
        zero += categorical_sample(logits, rng).action == 0;
    CHECK(zero / 10000.0 > 0.999);
}

TEST_CASE("categorical: uniform logits over 4 arms") {
    Rng rng(2);
    const Vector logits(4, 0.3);
    std::vector<int> counts(4, 0);
    for (int i = 0; i < 10000; ++i)
        ++counts[categorical_sample(logits, rng).action];
    for (int c : counts)
        CHECK(std::abs(c / 10000.0 - 0.25) < 0.02);
}

TEST_CASE("categorical frequencies match softmax within 3 sigma") {
    Rng rng(3);
    std::mt19937_64 lrng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const Vector logits = testing::random_vector(6, lrng, -2.0, 2.0);
        Vector lp(6);
        log_softmax(logits, lp);
        const int n = 20000;
        std::vector<int> counts(6, 0);
        for (int i = 0; i < n; ++i) {
            const auto s = categorical_sample(logits, rng);
            CHECK(s.log_prob == lp[s.action]);
            ++counts[s.action];
        }
        for (std::size_t k = 0; k < 6; ++k) {
            const double p = std::exp(lp[k]);
            CHECK(std::abs(counts[k] - n * p) <= 3.0 * std::sqrt(n * p * (1.0 - p)));
        }
    }
}

TEST_CASE("categorical rejects non-finite logits") {
    Rng rng(1);
    const Vector bad{0.0, std::numeric_limits<double>::quiet_NaN(), 1.0};
    try {
        categorical_sample(bad, rng);
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        CHECK(e.index() == 1);
    }
    const Vector inf{std::numeric_limits<double>::infinity(), 0.0};
    CHECK_THROWS_AS(categorical_sample(inf, rng), NonFiniteError);
}

TEST_CASE("categorical entropy lies in [0, log A]") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 1000; ++i) {
        const Vector logits = testing::random_vector(5, rng, -20.0, 20.0);
        const double h = categorical_entropy(logits);
        CHECK(h >= 0.0);
        CHECK(h <= std::log(5.0) + 1e-12);
    }
    CHECK(categorical_entropy(Vector(5, 1.7)) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
    CHECK(categorical_entropy(Vector{1000.0, 0.0}) == doctest::Approx(0.0));
}

TEST_CASE("argmax takes the first maximum") {
    CHECK(categorical_argmax(Vector{0.1, 2.0, 2.0, -1.0}) == 1);
}

TEST_CASE("ppo loss gradient matches finite differences") {
    auto policy = small_policy(4, 3, 2, 21);
    std::mt19937_64 rng(22);
    std::vector<Vector> obs;
    for (int i = 0; i < 12; ++i)
        obs.push_back(testing::random_vector(4, rng));
    std::uniform_int_distribution<std::size_t> act(0, 2), up(0, 1);
    std::uniform_real_distribution<double> shift(-0.6, 0.6), adv(-2.0, 2.0);
    std::vector<PpoSample> batch;
    for (const auto& o : obs) {
        PpoSample s;
        s.observation = o;
        s.upper = up(rng);
        s.action = act(rng);
        // Offsets push some ratios outside the clip range.
        s.old_log_prob = log_prob_of(policy, o, s.upper, s.action) + shift(rng);
        s.advantage = adv(rng);
        s.target_return = adv(rng);
        batch.push_back(s);
    }
    PpoConfig cfg;
    cfg.entropy_coef = 0.05;
    Vector g(policy.parameter_count(), 0.0);
    const auto loss = ppo_loss_gradient(policy, batch, cfg, g);
    CHECK(loss.clip_fraction > 0.0);
    CHECK(loss.clip_fraction < 1.0);
    CHECK(loss.total == doctest::Approx(loss.policy_loss + cfg.value_coef * loss.value_loss -
                                        cfg.entropy_coef * loss.entropy));
    const Vector fd = testing::numeric_gradient(policy.parameters(), [&] {
        Vector scratch(policy.parameter_count(), 0.0);
        return ppo_loss_gradient(policy, batch, cfg, scratch).total;
    });
    CHECK(testing::relative_error(g, fd) < 1e-4);
}

TEST_CASE("at ratio 1 the gradient is the vanilla policy gradient") {
    auto policy = small_policy(3, 4, 1, 31);
    std::mt19937_64 rng(32);
    std::vector<Vector> obs;
    for (int i = 0; i < 10; ++i)
        obs.push_back(testing::random_vector(3, rng));
    std::uniform_int_distribution<std::size_t> act(0, 3);
    std::uniform_real_distribution<double> adv(-1.0, 1.0);
    std::vector<PpoSample> batch;
    for (const auto& o : obs) {
        PpoSample s;
        s.observation = o;
        s.action = act(rng);
        s.old_log_prob = log_prob_of(policy, o, 0, s.action);
        s.advantage = adv(rng);
        batch.push_back(s);
    }
    PpoConfig cfg;
    cfg.value_coef = 0.0;
    cfg.entropy_coef = 0.0;
    Vector g(policy.parameter_count(), 0.0);
    const auto loss = ppo_loss_gradient(policy, batch, cfg, g);
    CHECK(loss.mean_ratio == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(loss.clip_fraction == 0.0);
    // -mean A log pi(a|s), differentiated numerically.
    const Vector pg = testing::numeric_gradient(policy.parameters(), [&] {
        double f = 0.0;
        for (const auto& s : batch)
            f -= s.advantage * log_prob_of(policy, s.observation, 0, s.action);
        return f / static_cast<double>(batch.size());
    });
    CHECK(testing::relative_error(g, pg) < 1e-6);
}

TEST_CASE("ppo loss rejects actions outside the policy") {
    auto policy = small_policy(2, 3, 1, 1);
    const Vector o{0.1, 0.2};
    PpoSample s;
    s.observation = o;
    s.action = 3;
    Vector g(policy.parameter_count(), 0.0);
    CHECK_THROWS_AS(ppo_loss_gradient(policy, std::span<const PpoSample>(&s, 1), PpoConfig{}, g), std::out_of_range);
}

namespace {

// Every step terminal with reward equal to the stored value: advantages are
// exactly zero and the value target equals the current value head.
Rollout zero_advantage_rollout(const ConditionedModel& policy, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Rollout ro;
    for (int t = 0; t < 40; ++t) {
        const Vector o = testing::random_vector(policy.input_dim(), rng);
        const auto out = policy.forward(o, 0);
        Vector lp(out[kLogitsHead].size());
        log_softmax(out[kLogitsHead], lp);
        const std::size_t a = static_cast<std::size_t>(t) % lp.size();
        const double v = out[kValueHead][0];
        ro.push(o, 0, a, lp[a], v, v, true);
    }
    return ro;
}

}  // namespace

TEST_CASE("ppo_update leaves parameters unchanged with zero advantages, exact values and no entropy term") {
    auto policy = small_policy(3, 4, 1, 41);
    const Vector before(policy.parameters().begin(), policy.parameters().end());
    const Rollout ro = zero_advantage_rollout(policy, 42);
    PpoConfig cfg;
    cfg.entropy_coef = 0.0;
    cfg.minibatch_size = 16;
    OptimizerState opt(policy.parameter_count(), cfg.adam);
    Rng rng(43);
    const Vector boot{0.0};
    const auto stats = ppo_update(policy, opt, std::span<const Rollout>(&ro, 1), boot, cfg, rng);
    CHECK(stats.samples == 40);
    CHECK(stats.minibatches == 4 * 3);
    const Vector after(policy.parameters().begin(), policy.parameters().end());
    CHECK(after == before);
}

TEST_CASE("with zero advantages the entropy term alone moves the policy") {
    auto policy = small_policy(3, 4, 1, 41, 3.0);
    const Rollout ro = zero_advantage_rollout(policy, 42);
    PpoConfig cfg;
    cfg.minibatch_size = 16;
    double entropy_before = 0.0;
    for (const auto& o : ro.observations)
        entropy_before += categorical_entropy(policy.forward(o, 0)[kLogitsHead]);
    OptimizerState opt(policy.parameter_count(), cfg.adam);
    Rng rng(43);
    const Vector boot{0.0};
    ppo_update(policy, opt, std::span<const Rollout>(&ro, 1), boot, cfg, rng);
    double entropy_after = 0.0;
    for (const auto& o : ro.observations)
        entropy_after += categorical_entropy(policy.forward(o, 0)[kLogitsHead]);
    CHECK(entropy_after > entropy_before);
}

TEST_CASE("ppo_update is seed-deterministic") {
    auto a = small_policy(3, 4, 1, 51);
    auto b = a;
    auto c = a;
    std::mt19937_64 rng(52);
    Rollout ro;
    std::uniform_int_distribution<std::size_t> act(0, 3);
    for (int t = 0; t < 64; ++t) {
        const Vector o = testing::random_vector(3, rng);
        const std::size_t action = act(rng);
        ro.push(o, 0, action, log_prob_of(a, o, 0, action), 0.1, testing::random_vector(1, rng)[0], t % 9 == 8);
    }
    PpoConfig cfg;
    cfg.minibatch_size = 16;
    const Vector boot{0.3};
    auto run = [&](ConditionedModel& p, std::uint64_t seed) {
        OptimizerState opt(p.parameter_count(), cfg.adam);
        Rng r(seed);
        return ppo_update(p, opt, std::span<const Rollout>(&ro, 1), boot, cfg, r);
    };
    const auto sa = run(a, 7);
    const auto sb = run(b, 7);
    run(c, 8);
    CHECK(sa.policy_loss == sb.policy_loss);
    const Vector pa(a.parameters().begin(), a.parameters().end());
    const Vector pb(b.parameters().begin(), b.parameters().end());
    const Vector pc(c.parameters().begin(), c.parameters().end());
    CHECK(pa == pb);
    CHECK(pa != pc);
}

TEST_CASE("ppo_update reports the sample behind a non-finite loss") {
    auto policy = small_policy(2, 2, 1, 61);
    Rollout ro;
    for (int t = 0; t < 8; ++t) {
        Vector o{0.1 * t, -0.2};
        if (t == 5)
            o[0] = std::numeric_limits<double>::quiet_NaN();
        ro.push(o, 0, 0, -0.7, 0.0, 1.0, false);
    }
    PpoConfig cfg;
    OptimizerState opt(policy.parameter_count(), cfg.adam);
    Rng rng(1);
    const Vector boot{0.0};
    const Vector before(policy.parameters().begin(), policy.parameters().end());
    try {
        ppo_update(policy, opt, std::span<const Rollout>(&ro, 1), boot, cfg, rng);
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        CHECK(e.index() == 5);
    }
    const Vector after(policy.parameters().begin(), policy.parameters().end());
    CHECK(after == before);
}

TEST_CASE("rollout validation") {
    Rollout ro;
    ro.push(Vector{1.0}, 0, 0, -0.5, 0.0, 1.0, false);
    CHECK_NOTHROW(ro.validate());
    ro.rewards.push_back(0.0);
    CHECK_THROWS_AS(ro.validate(), std::invalid_argument);
    ro.rewards.pop_back();
    ro.log_probs[0] = -std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(ro.validate(), NonFiniteError);
    ro.log_probs[0] = -0.5;
    ro.rewards[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(ro.validate(), NonFiniteError);
}

TEST_CASE("rollout save/load round trip") {
    Rollout ro;
    ro.push(Vector{1.0, 2.5}, 1, 3, -0.25, 0.5, 1.0, false);
    ro.push(Vector{-1.0, 0.0}, 0, 2, -1.25, -0.5, 0.0, true);
    std::stringstream ss;
    BinaryWriter w(ss);
    ro.save(w);
    BinaryReader r(ss);
    const Rollout back = Rollout::load(r);
    CHECK(back.observations == ro.observations);
    CHECK(back.upper_actions == ro.upper_actions);
    CHECK(back.actions == ro.actions);
    CHECK(back.log_probs == ro.log_probs);
    CHECK(back.values == ro.values);
    CHECK(back.rewards == ro.rewards);
    CHECK(back.dones == ro.dones);
}

TEST_CASE("config validation") {
    PpoConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = [](auto mutate) {
        PpoConfig x;
        mutate(x);
        CHECK_THROWS_AS(x.validate(), std::invalid_argument);
    };
    bad([](PpoConfig& x) { x.gamma = 0.0; });
    bad([](PpoConfig& x) { x.gamma = 1.5; });
    bad([](PpoConfig& x) { x.gae_lambda = -0.1; });
    bad([](PpoConfig& x) { x.clip_epsilon = 0.0; });
    bad([](PpoConfig& x) { x.epochs = 0; });
    bad([](PpoConfig& x) { x.horizon = 0; });
    bad([](PpoConfig& x) { x.actors = 0; });
}

TEST_CASE("two-armed bandit: arm 0 probability passes 0.95 within 2000 steps") {
    // One-step episodes, reward 1 on arm 0.
    auto policy = small_policy(1, 2, 1, 71, 0.01);
    PpoConfig cfg;
    cfg.horizon = 16;
    cfg.minibatch_size = 32;
    cfg.adam.step_size = 1e-2;
    OptimizerState opt(policy.parameter_count(), cfg.adam);
    Rng act_rng(72), train_rng(73);
    const Vector obs{1.0};
    auto p0 = [&] {
        const auto out = policy.forward(obs, 0);
        Vector lp(2);
        log_softmax(out[kLogitsHead], lp);
        return std::exp(lp[0]);
    };
    CHECK(p0() == doctest::Approx(0.5).epsilon(0.05));
    std::size_t steps = 0;
    std::vector<Rollout> rollouts(cfg.actors);
    const Vector boot(cfg.actors, 0.0);
    while (steps < 2000 && p0() <= 0.95) {
        for (auto& ro : rollouts) {
            ro.clear();
            for (std::size_t t = 0; t < cfg.horizon; ++t) {
                const auto out = policy.forward(obs, 0);
                const auto s = categorical_sample(out[kLogitsHead], act_rng);
                ro.push(obs, 0, s.action, s.log_prob, out[kValueHead][0], s.action == 0 ? 1.0 : 0.0, true);
                ++steps;
            }
        }
        ppo_update(policy, opt, rollouts, boot, cfg, train_rng);
    }
    MESSAGE("steps used: " << steps << ", p(arm 0) = " << p0());
    CHECK(steps <= 2000);
    CHECK(p0() > 0.95);
}
