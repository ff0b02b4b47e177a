// Acceptance run: one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dehrl/runner.hpp"
#include "../tests/flat_ppo.hpp"

using namespace dehrl;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

// Budgets in primitive steps (summed over actors).
constexpr std::uint64_t kFlatBudget = 2'000'000;
constexpr std::uint64_t kEquivalenceSteps = 10'000;
constexpr std::uint64_t kDiversityBudget = 5'000'000;
constexpr std::uint64_t kBenefitBudget = 2'000'000;
constexpr std::uint64_t kHardFlatBudget = 2'000'000;
constexpr std::uint64_t kHardDehrlBudget = 10'000'000;
constexpr std::uint64_t kMineCraftBudget = 2'000'000;
constexpr std::size_t kMineCraftEpisodes = 200;
constexpr std::uint64_t kMetaInterval = 200'000;
constexpr std::uint64_t kMetaBudget = 600'000;

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

std::string fmt(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string overcooked_env(int level, const std::string& goal, const std::string& extra = "") {
    return R"("env": {"name": "overcooked", "reward_level": )" + std::to_string(level) + R"(, "goal": ")" + goal +
           "\"" + extra + "}";
}

// Flat PPO with 16 primitive actions needs longer episodes than the 200-step
// default to ever reach a corner by chance.
const std::string kLongEpisodes = R"(, "step_limit": 1000)";

RunConfig config_from(const std::string& body, std::uint64_t budget) {
    return parse_config("{" + body + R"(, "budget": )" + std::to_string(budget) + "}");
}

// Trains one seed in memory and returns its episode log.
EpisodeLog train(const RunConfig& config, std::uint64_t seed, std::unique_ptr<Hierarchy>* keep = nullptr,
                 const std::function<bool(const EpisodeLog&)>& stop = {}) {
    auto h = build_agent(config, seed);
    EpisodeLog log;
    h->set_episode_callback([&](const Hierarchy::EpisodeRecord& r) { log.push({r.index, r.reward, r.length, r.step}); });
    while (h->total_steps() < config.budget) {
        h->step();
        if (stop && stop(log))
            break;
    }
    if (keep)
        *keep = std::move(h);
    return log;
}

// ---------------------------------------------------------------------------

Verdict oracle_suite(const std::vector<std::string>& binaries) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> failed;
    for (const auto& b : binaries) {
        progress("running " + fs::path(b).filename().string());
        const std::string cmd = "\"" + b + "\" > /dev/null 2>&1";
        if (std::system(cmd.c_str()) != 0)
            failed.push_back(fs::path(b).filename().string());
    }
    const double secs = seconds_since(t0);
    Verdict v;
    v.pass = failed.empty() && secs < 120.0 && !binaries.empty();
    v.detail = std::to_string(binaries.size()) + " suites in " + fmt(secs, 1) + " s (limit 120 s)";
    for (const auto& f : failed)
        v.detail += ", failed " + f;
    return v;
}

Verdict flat_ppo_sanity() {
    const auto cfg = config_from(overcooked_env(1, "any", kLongEpisodes) + R"(, "baseline": {"kind": "ppo"})", kFlatBudget);
    Verdict v{true, "budget " + std::to_string(kFlatBudget) + ", step limit 1000, final performance"};
    for (auto seed : kSeeds) {
        const auto log = train(cfg, seed);
        const double fp = log.empty() ? 0.0 : final_performance_score(log);
        progress("flat ppo seed " + std::to_string(seed) + ": " + fmt(fp));
        v.detail += " seed" + std::to_string(seed) + "=" + fmt(fp);
        v.pass = v.pass && fp >= 0.95;
    }
    v.detail += " (need >= 0.95 on every seed)";
    return v;
}

Verdict lambda_zero_equivalence() {
    const std::string env = overcooked_env(1, "any");
    const auto dehrl = config_from(env + R"(, "hierarchy": {"levels": [{"actions": 16, "period": 1, "lambda": 0}]})",
                                   kEquivalenceSteps);
    const auto flat = config_from(env + R"(, "baseline": {"kind": "ppo"})", kEquivalenceSteps);
    const std::uint64_t seed = 1;
    auto a = build_agent(dehrl, seed);
    auto b = build_agent(flat, seed);
    const EnvConfig ec = dehrl.env;
    testing::FlatPpo plain(dehrl.hierarchy.ppo, dehrl.hierarchy.network,
                           [ec](std::uint64_t s) { return make_environment(ec, s); }, seed);
    std::uint64_t compared = 0, updates = 0;
    bool same = true;
    Vector last(a->level(0).policy.parameters().begin(), a->level(0).policy.parameters().end());
    while (a->total_steps() < kEquivalenceSteps && same) {
        a->step();
        b->step();
        plain.step();
        const auto& pa = a->level(0).policy.parameters();
        const auto& pb = b->level(0).policy.parameters();
        const auto& pc = plain.policy().parameters();
        same = std::equal(pa.begin(), pa.end(), pb.begin(), pb.end()) &&
               std::equal(pa.begin(), pa.end(), pc.begin(), pc.end());
        if (!std::equal(pa.begin(), pa.end(), last.begin(), last.end())) {
            ++updates;
            last.assign(pa.begin(), pa.end());
        }
        ++compared;
    }
    Verdict v;
    v.pass = same && a->total_steps() == kEquivalenceSteps && updates > 0;
    v.detail = std::to_string(a->total_steps()) + " steps, " + std::to_string(updates) +
               " parameter updates, parameters compared after each of " + std::to_string(compared) +
               " ticks against the ppo baseline and an independent PPO loop: " + (same ? "identical" : "DIVERGED");
    return v;
}

Verdict diversity() {
    const auto cfg = config_from(overcooked_env(1, "any") + R"(, "hierarchy": {"levels": [
        {"actions": 16, "period": 1}, {"actions": 5, "period": 4}], "intrinsic_only": true,
        "predictor_epochs": 16})",
                                 kDiversityBudget);
    std::size_t four = 0, five = 0;
    Verdict v;
    v.detail = "budget " + std::to_string(kDiversityBudget) + ";";
    for (auto seed : kSeeds) {
        std::unique_ptr<Hierarchy> h;
        train(cfg, seed, &h);
        auto env = make_environment(cfg.env, 1000 + seed);
        const auto r = subpolicy_probe(*h, *env, 1, 32);
        std::string labels;
        for (auto l : r.labels)
            labels += (labels.empty() ? "" : "/") + to_string(l);
        const auto d = r.distinct_useful();
        progress("diversity seed " + std::to_string(seed) + ": " + labels);
        v.detail += " seed" + std::to_string(seed) + "=" + labels + " (" + std::to_string(d) + ")";
        four += d >= 4;
        five += d == 5;
    }
    v.pass = four >= 2 && five >= 1;
    v.detail += "; need >= 4 distinct on 2 of 3 seeds and 5 on 1";
    return v;
}

Verdict hierarchy_benefit() {
    const std::string env = overcooked_env(1, "random", kLongEpisodes);
    const auto dehrl = config_from(
        env + R"(, "hierarchy": {"levels": [{"actions": 16, "period": 1}, {"actions": 5, "period": 4}]})", kBenefitBudget);
    const auto flat = config_from(env + R"(, "baseline": {"kind": "ppo"})", kBenefitBudget);
    std::size_t wins = 0;
    Verdict v;
    v.detail = "budget " + std::to_string(kBenefitBudget) + ", learning speed dehrl vs ppo:";
    for (auto seed : kSeeds) {
        const auto ld = train(dehrl, seed);
        const auto lf = train(flat, seed);
        const double sd = ld.empty() ? 0.0 : learning_speed_score(ld);
        const double sf = lf.empty() ? 0.0 : learning_speed_score(lf);
        progress("benefit seed " + std::to_string(seed) + ": " + fmt(sd) + " vs " + fmt(sf));
        v.detail += " seed" + std::to_string(seed) + "=" + fmt(sd) + "/" + fmt(sf);
        wins += sd > sf;
    }
    v.pass = wins >= 2;
    v.detail += " (dehrl ahead on " + std::to_string(wins) + " of 3)";
    return v;
}

Verdict hard_setting() {
    const std::string env = overcooked_env(2, "any", kLongEpisodes);
    const auto flat = config_from(env + R"(, "baseline": {"kind": "ppo"})", kHardFlatBudget);
    const auto dehrl = config_from(env + R"(, "hierarchy": {"levels": [
        {"actions": 16, "period": 1}, {"actions": 5, "period": 4}, {"actions": 5, "period": 48}]})",
                                   kHardDehrlBudget);
    Verdict v;
    bool flat_zero = true;
    v.detail = "flat ppo final performance at " + std::to_string(kHardFlatBudget) + ":";
    for (auto seed : kSeeds) {
        const auto log = train(flat, seed);
        const double fp = log.empty() ? 0.0 : final_performance_score(log);
        progress("hard flat seed " + std::to_string(seed) + ": " + fmt(fp));
        v.detail += " " + fmt(fp, 2);
        flat_zero = flat_zero && fp == 0.0;
    }
    // A seed succeeds once its last-100 score turns positive within the budget.
    std::size_t hits = 0;
    v.detail += "; dehrl within " + std::to_string(kHardDehrlBudget) + ":";
    for (auto seed : kSeeds) {
        std::unique_ptr<Hierarchy> h;
        const auto log = train(dehrl, seed, &h, [](const EpisodeLog& l) {
            return !l.empty() && l.entries().back().reward > 0.0;
        });
        const bool hit = !log.empty() && final_performance_score(log) > 0.0;
        progress("hard dehrl seed " + std::to_string(seed) + ": " + (hit ? "positive" : "zero") + " at " +
                 std::to_string(h->total_steps()));
        v.detail += " seed" + std::to_string(seed) + "=" + (hit ? "positive at " + std::to_string(h->total_steps()) : "0");
        hits += hit;
        if (hit)
            break;
    }
    v.pass = flat_zero && hits >= 1;
    return v;
}

// Rolls the trained stack without updates: each level samples its action at its own period.
double hierarchy_valid_operations(Hierarchy& h, const EnvConfig& ec, std::size_t episodes) {
    auto env = make_environment(ec, 4242);
    double total = 0.0;
    std::vector<std::size_t> chosen(h.level_count() + 1, 0);
    for (std::size_t e = 0; e < episodes; ++e) {
        Observation obs = env->reset();
        bool done = false;
        for (std::size_t t = 0; !done; ++t) {
            for (std::size_t l = h.level_count(); l-- > 0;)
                if (t % h.level(l).spec.period == 0)
                    chosen[l] = h.policy_act(l, obs.data, chosen[l + 1]).action;
            done = env->step(chosen[0]).done;
            obs = env->observe();
        }
        total += env->episode_stats().at("valid_operations");
    }
    return total / static_cast<double>(episodes);
}

double random_valid_operations(const EnvConfig& ec, std::size_t episodes) {
    auto env = make_environment(ec, 4243);
    Rng rng(99);
    std::uniform_int_distribution<std::size_t> pick(0, env->action_count() - 1);
    double total = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
        env->reset();
        while (!env->step(pick(rng)).done) {
        }
        total += env->episode_stats().at("valid_operations");
    }
    return total / static_cast<double>(episodes);
}

Verdict minecraft() {
    const auto cfg = config_from(R"("env": {"name": "minecraft", "action_count": 11}, "hierarchy": {"levels": [
        {"actions": 11, "period": 1}, {"actions": 8, "period": 4}], "intrinsic_only": true}, "ppo": {"actors": 1})",
                                 kMineCraftBudget);
    std::unique_ptr<Hierarchy> h;
    train(cfg, 1, &h);
    const double ours = hierarchy_valid_operations(*h, cfg.env, kMineCraftEpisodes);
    const double rnd = random_valid_operations(cfg.env, kMineCraftEpisodes);
    Verdict v;
    v.pass = ours > rnd;
    v.detail = "mean valid operations over " + std::to_string(kMineCraftEpisodes) + " episodes after " +
               std::to_string(kMineCraftBudget) + " steps: dehrl " + fmt(ours, 2) + " vs random " + fmt(rnd, 2);
    return v;
}

Verdict meta_reset(const fs::path& work) {
    auto cfg = config_from(overcooked_env(1, "fix") + R"(, "hierarchy": {"levels": [
        {"actions": 16, "period": 1}, {"actions": 5, "period": 4}]}, "meta_reset_interval": )" +
                               std::to_string(kMetaInterval),
                           kMetaBudget);
    Vector lower;
    std::size_t resets = 0, unchanged = 0;
    std::vector<double> before, after;
    auto snapshot = [](const Hierarchy& h) {
        Vector v(h.level(0).policy.parameters().begin(), h.level(0).policy.parameters().end());
        const auto& o = h.level(0).policy_optimizer;
        v.insert(v.end(), o.first_moment.begin(), o.first_moment.end());
        v.insert(v.end(), h.level(1).predictor->parameters().begin(), h.level(1).predictor->parameters().end());
        return v;
    };
    auto hook = [&](const Hierarchy& h) {
        if (h.total_steps() / kMetaInterval > resets) {
            lower = snapshot(h);
            before.push_back(h.mean_policy_entropy(h.top()));
        }
    };
    auto on_reset = [&](const Hierarchy& h) {
        ++resets;
        unchanged += snapshot(h) == lower;
        after.push_back(h.mean_policy_entropy(h.top()));
    };
    fs::remove_all(work / "meta");
    train_seed(cfg, 1, work / "meta", false, hook, on_reset);
    Verdict v;
    const double max_entropy = std::log(5.0);
    bool spikes = resets > 0 && before.size() == resets && after.size() == resets;
    v.detail = std::to_string(resets) + " resets, top entropy before->after:";
    for (std::size_t i = 0; i < after.size() && i < before.size(); ++i) {
        v.detail += " " + fmt(before[i]) + "->" + fmt(after[i]);
        spikes = spikes && after[i] > before[i] && after[i] > 0.99 * max_entropy;
    }
    v.detail += "; lower levels bit-unchanged across " + std::to_string(unchanged) + " of " + std::to_string(resets);
    v.pass = spikes && unchanged == resets && resets == kMetaBudget / kMetaInterval;
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> only;
    std::string work = "acceptance_work";
    app.add_option("--only", only, "Criteria to run (default: all)");
    app.add_option("--work", work, "Scratch directory")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    std::vector<std::string> binaries;
    {
        std::stringstream ss(DEHRL_TEST_BINARIES);
        for (std::string b; std::getline(ss, b, '|');)
            if (!b.empty())
                binaries.push_back(b);
    }
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"oracle/property suite", [&] { return oracle_suite(binaries); }},
        {"flat PPO sanity, reward-level 1 / any", flat_ppo_sanity},
        {"lambda=0 equivalence", lambda_zero_equivalence},
        {"diversity discovery", diversity},
        {"hierarchy benefit, reward-level 1 / random", hierarchy_benefit},
        {"hard setting, reward-level 2 / any", hard_setting},
        {"MineCraft valid operations vs random", minecraft},
        {"meta-reset protocol", [&] { return meta_reset(work); }},
    };
    const std::set<int> selected(only.begin(), only.end());
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(n))
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        std::cout << "criterion " << n << " [" << criteria[i].first << "]: " << (v.pass ? "PASS" : "FAIL") << " - "
                  << v.detail << " (" << fmt(seconds_since(t0), 0) << " s)" << std::endl;
        all = all && v.pass;
    }
    return all ? 0 : 1;
}
