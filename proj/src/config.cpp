#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "dehrl/config.hpp"

namespace dehrl {

namespace {

using nlohmann::json;

// Walks one JSON object, remembering which keys were consumed so leftovers can
// be reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object())
            throw ConfigError("'" + (path_.empty() ? std::string("<root>") : path_) + "' must be an object");
    }

    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
    bool has(const std::string& k) const { return j_.contains(k); }

    const json& raw(const std::string& k) {
        used_.insert(k);
        return j_.at(k);
    }

    Section child(const std::string& k) {
        used_.insert(k);
        return Section(j_.at(k), key(k));
    }

    template <typename T>
    T get(const std::string& k, T fallback) {
        if (!has(k))
            return fallback;
        used_.insert(k);
        return convert<T>(j_.at(k), key(k));
    }

    template <typename T>
    T require(const std::string& k) {
        if (!has(k))
            throw ConfigError("missing required key '" + key(k) + "'");
        used_.insert(k);
        return convert<T>(j_.at(k), key(k));
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k))
                throw ConfigError("unknown key '" + key(k) + "'");
    }

    template <typename T>
    static T convert(const json& v, const std::string& name) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean())
                throw ConfigError("'" + name + "' must be a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string())
                throw ConfigError("'" + name + "' must be a string");
            return v.get<std::string>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number())
                throw ConfigError("'" + name + "' must be a number");
            const double d = v.get<double>();
            if (!std::isfinite(d))
                throw ConfigError("'" + name + "' must be finite");
            return d;
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
                throw ConfigError("'" + name + "' must be a non-negative integer");
            return static_cast<T>(v.get<unsigned long long>());
        } else {
            static_assert(sizeof(T) == 0, "unsupported config value type");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

std::vector<std::size_t> size_list(const json& v, const std::string& name) {
    if (!v.is_array())
        throw ConfigError("'" + name + "' must be a list of positive integers");
    std::vector<std::size_t> out;
    for (const auto& x : v) {
        const auto n = Section::convert<std::size_t>(x, name);
        if (n == 0)
            throw ConfigError("'" + name + "' entries must be positive");
        out.push_back(n);
    }
    return out;
}

EnvConfig parse_env(Section s) {
    EnvConfig e;
    const auto name = s.require<std::string>("name");
    if (name == "overcooked") {
        e.kind = EnvKind::OverCooked;
        auto& oc = e.overcooked;
        oc.grid_size = s.get<int>("grid_size", oc.grid_size);
        oc.step_limit = s.get<int>("step_limit", oc.step_limit);
        if (oc.grid_size < 3)
            throw ConfigError("'" + s.key("grid_size") + "' must be at least 3");
        if (oc.step_limit <= 0)
            throw ConfigError("'" + s.key("step_limit") + "' must be positive");
        try {
            e.encoding = parse_encoding(s.get<std::string>("encoding", to_string(e.encoding)));
        } catch (const std::invalid_argument& ex) {
            throw ConfigError("'" + s.key("encoding") + "': " + ex.what());
        }
        const int level = s.get<int>("reward_level", 1);
        GoalType goal;
        try {
            goal = parse_goal_type(s.get<std::string>("goal", "any"));
        } catch (const std::invalid_argument& ex) {
            throw ConfigError("'" + s.key("goal") + "': " + ex.what());
        }
        const int fixed = s.get<int>("fixed_goal", 0);
        try {
            oc.reward = RewardSetting(level, goal, fixed);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError("'" + s.key("reward_level") + "'/'" + s.key("fixed_goal") + "': " + ex.what());
        }
    } else if (name == "minecraft") {
        e.kind = EnvKind::MineCraft;
        auto& mc = e.minecraft;
        mc.size_x = s.get<int>("size_x", mc.size_x);
        mc.size_y = s.get<int>("size_y", mc.size_y);
        mc.size_z = s.get<int>("size_z", mc.size_z);
        mc.episode_length = s.get<int>("episode_length", mc.episode_length);
        mc.action_count = s.get<int>("action_count", mc.action_count);
        mc.view_size = s.get<int>("view_size", mc.view_size);
        mc.view_depth = s.get<double>("view_depth", mc.view_depth);
        if (mc.size_x < 3 || mc.size_y < 3 || mc.size_z < 4)
            throw ConfigError("'" + s.key("size_*") + "': world must be at least 3 x 3 x 4");
        if (mc.episode_length <= 0)
            throw ConfigError("'" + s.key("episode_length") + "' must be positive");
        if (mc.action_count != 10 && mc.action_count != 11)
            throw ConfigError("'" + s.key("action_count") + "' must be 10 or 11");
        if (mc.view_size < 1 || mc.view_size % 2 == 0)
            throw ConfigError("'" + s.key("view_size") + "' must be a positive odd number");
        if (!(mc.view_depth > 0.0))
            throw ConfigError("'" + s.key("view_depth") + "' must be positive");
    } else {
        throw ConfigError("'" + s.key("name") + "': unknown environment '" + name +
                          "' (expected overcooked or minecraft)");
    }
    s.finish();
    return e;
}

void parse_ppo(Section s, PpoConfig& p) {
    p.horizon = s.get("horizon", p.horizon);
    p.epochs = s.get("epochs", p.epochs);
    p.minibatch_size = s.get("minibatch_size", p.minibatch_size);
    p.gamma = s.get("gamma", p.gamma);
    p.gae_lambda = s.get("gae_lambda", p.gae_lambda);
    p.clip_epsilon = s.get("clip_epsilon", p.clip_epsilon);
    p.value_coef = s.get("value_coef", p.value_coef);
    p.entropy_coef = s.get("entropy_coef", p.entropy_coef);
    p.actors = s.get("actors", p.actors);
    p.max_grad_norm = s.get("max_grad_norm", p.max_grad_norm);
    p.normalize_advantages = s.get("normalize_advantages", p.normalize_advantages);
    p.adam.step_size = s.get("step_size", p.adam.step_size);
    // Second name for the same Adam step; both given must agree.
    if (s.has("learning_rate")) {
        const double lr = s.get("learning_rate", p.adam.step_size);
        if (s.has("step_size") && lr != p.adam.step_size)
            throw ConfigError("'" + s.key("learning_rate") + "' and '" + s.key("step_size") +
                              "' both set the Adam step and disagree");
        p.adam.step_size = lr;
    }
    p.adam.beta1 = s.get("beta1", p.adam.beta1);
    p.adam.beta2 = s.get("beta2", p.adam.beta2);
    p.adam.epsilon = s.get("epsilon", p.adam.epsilon);
    s.finish();
    try {
        p.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
    }
}

void parse_network(Section s, NetworkConfig& n) {
    if (s.has("policy_hidden"))
        n.policy_hidden = size_list(s.raw("policy_hidden"), s.key("policy_hidden"));
    if (s.has("predictor_encoder"))
        n.predictor_encoder = size_list(s.raw("predictor_encoder"), s.key("predictor_encoder"));
    if (s.has("predictor_decoder"))
        n.predictor_decoder = size_list(s.raw("predictor_decoder"), s.key("predictor_decoder"));
    n.policy_logits_scale = s.get("policy_logits_scale", n.policy_logits_scale);
    if (n.predictor_encoder.empty())
        throw ConfigError("'" + s.key("predictor_encoder") + "' needs at least one layer (the action embedding size)");
    s.finish();
}

void parse_hierarchy(Section s, HierarchyConfig& h, const std::string& path) {
    const auto& levels = s.raw("levels");
    if (!levels.is_array() || levels.empty())
        throw ConfigError("'" + s.key("levels") + "' must be a non-empty list");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        Section l(levels[i], s.key("levels") + "[" + std::to_string(i) + "]");
        LevelSpec spec;
        spec.action_count = l.require<std::size_t>("actions");
        spec.period = l.require<std::size_t>("period");
        spec.lambda = l.get("lambda", spec.lambda);
        l.finish();
        h.levels.push_back(spec);
    }
    h.intrinsic_only = s.get("intrinsic_only", h.intrinsic_only);
    h.predictor_epochs = s.get("predictor_epochs", h.predictor_epochs);
    if (h.predictor_epochs == 0)
        throw ConfigError("'" + s.key("predictor_epochs") + "' must be positive");
    if (s.has("distance")) {
        Section d = s.child("distance");
        h.distance.alpha = d.get("alpha", h.distance.alpha);
        if (h.distance.alpha < 0.0 || h.distance.alpha > 1.0)
            throw ConfigError("'" + d.key("alpha") + "' must lie in [0, 1]");
        const auto mode = d.get<std::string>("mode", "min");
        if (mode == "min")
            h.distance.mode = BountyMode::Min;
        else if (mode == "sum")
            h.distance.mode = BountyMode::Sum;
        else
            throw ConfigError("'" + d.key("mode") + "' must be min or sum");
        d.finish();
    }
    (void)path;
    s.finish();
}

}  // namespace

std::size_t EnvConfig::action_count() const {
    return kind == EnvKind::OverCooked ? kOverCookedActions : static_cast<std::size_t>(minecraft.action_count);
}

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw ConfigError(std::string("config is not valid JSON: ") + ex.what());
    }
    Section root(j, "");
    RunConfig c;
    c.name = root.get<std::string>("name", "");
    if (!root.has("env"))
        throw ConfigError("missing required key 'env'");
    c.env = parse_env(root.child("env"));

    if (root.has("ppo"))
        parse_ppo(root.child("ppo"), c.hierarchy.ppo);
    if (root.has("network"))
        parse_network(root.child("network"), c.hierarchy.network);

    const bool has_h = root.has("hierarchy"), has_b = root.has("baseline");
    if (has_h == has_b)
        throw ConfigError("exactly one of 'hierarchy' and 'baseline' must be given");
    if (has_h) {
        parse_hierarchy(root.child("hierarchy"), c.hierarchy, "hierarchy");
        try {
            validate_levels(c.hierarchy.levels, c.env.action_count());
        } catch (const ConfigError& ex) {
            throw ConfigError(std::string("'hierarchy.levels': ") + ex.what());
        }
    } else {
        Section b = root.child("baseline");
        try {
            c.baseline = parse_baseline_kind(b.require<std::string>("kind"));
        } catch (const std::invalid_argument& ex) {
            if (dynamic_cast<const ConfigError*>(&ex))
                throw;
            throw ConfigError(std::string("'baseline.kind': ") + ex.what());
        }
        c.hierarchy.bonus_scale = b.get("bonus_scale", c.hierarchy.bonus_scale);
        b.finish();
    }

    c.budget = root.require<std::uint64_t>("budget");
    if (c.budget == 0)
        throw ConfigError("'budget' must be positive");
    if (root.has("seeds")) {
        const auto& s = root.raw("seeds");
        if (!s.is_array() || s.empty())
            throw ConfigError("'seeds' must be a non-empty list");
        c.seeds.clear();
        for (const auto& x : s)
            c.seeds.push_back(Section::convert<std::uint64_t>(x, "seeds"));
        auto sorted = c.seeds;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw ConfigError("'seeds' must not repeat");
    }
    c.meta_reset_interval = root.get("meta_reset_interval", c.meta_reset_interval);
    c.checkpoint_interval = root.get("checkpoint_interval", c.checkpoint_interval);
    if (c.checkpoint_interval == 0)
        throw ConfigError("'checkpoint_interval' must be positive");
    c.output_dir = root.get<std::string>("output_dir", c.name.empty() ? "run" : c.name);
    if (c.output_dir.empty())
        throw ConfigError("'output_dir' must not be empty");
    root.finish();
    return c;
}

std::unique_ptr<Environment> make_environment(const EnvConfig& env, std::uint64_t seed) {
    if (env.kind == EnvKind::OverCooked)
        return std::make_unique<OverCookedEnv>(env.overcooked, seed, env.encoding);
    return std::make_unique<MineCraftEnv>(env.minecraft);
}

HierarchyConfig effective_hierarchy(const RunConfig& config) {
    if (config.baseline)
        return baseline_config(config.hierarchy, config.env.action_count());
    return config.hierarchy;
}

std::unique_ptr<Hierarchy> build_agent(const RunConfig& config, std::uint64_t seed) {
    const EnvConfig env = config.env;
    auto h = std::make_unique<Hierarchy>(
        effective_hierarchy(config), [env](std::uint64_t s) { return make_environment(env, s); }, seed);
    if (config.baseline) {
        const bool quantize = !(env.kind == EnvKind::OverCooked && env.encoding == Encoding::Compact);
        h->set_exploration_bonus(make_bonus(*config.baseline, h->observation_size(), env.action_count(), quantize,
                                            config.hierarchy.network, config.hierarchy.ppo.adam,
                                            seed ^ 0x9e3779b97f4a7c15ull));
    }
    return h;
}

}  // namespace dehrl
