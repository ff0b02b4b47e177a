#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dehrl/baselines.hpp"

namespace dehrl {

std::string to_string(BaselineKind k) {
    switch (k) {
    case BaselineKind::Ppo:
        return "ppo";
    case BaselineKind::StateNovelty:
        return "state_novelty";
    case BaselineKind::TransitionNovelty:
        return "transition_novelty";
    }
    return "?";
}

BaselineKind parse_baseline_kind(const std::string& name) {
    if (name == "ppo")
        return BaselineKind::Ppo;
    if (name == "state_novelty")
        return BaselineKind::StateNovelty;
    if (name == "transition_novelty")
        return BaselineKind::TransitionNovelty;
    throw std::invalid_argument("unknown baseline kind '" + name +
                                "' (expected ppo, state_novelty or transition_novelty)");
}

std::uint64_t VisitTable::key(const Observation& obs) const {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](const unsigned char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    const std::uint64_t dims[3] = {obs.channels, obs.height, obs.width};
    mix(reinterpret_cast<const unsigned char*>(dims), sizeof(dims));
    if (quantize_) {
        for (double v : obs.data) {
            const auto q = static_cast<std::uint8_t>(std::clamp(std::floor(v * 16.0), 0.0, 255.0));
            mix(&q, 1);
        }
    } else if (!obs.data.empty()) {
        mix(reinterpret_cast<const unsigned char*>(obs.data.data()), obs.data.size() * sizeof(double));
    }
    return h;
}

std::uint64_t VisitTable::count(const Observation& obs) const {
    const auto it = counts_.find(key(obs));
    return it == counts_.end() ? 0 : it->second;
}

std::uint64_t VisitTable::visit(const Observation& obs) {
    ++total_;
    return ++counts_[key(obs)];
}

void VisitTable::merge(const VisitTable& other) {
    if (other.quantize_ != quantize_)
        throw std::invalid_argument("cannot merge visit tables with different hashing");
    for (const auto& [k, c] : other.counts_)
        counts_[k] += c;
    total_ += other.total_;
}

void VisitTable::save(BinaryWriter& w) const {
    w.tag("VIST");
    w.write<std::uint8_t>(quantize_);
    w.write(total_);
    // Sorted so equal tables give equal bytes.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> items(counts_.begin(), counts_.end());
    std::sort(items.begin(), items.end());
    w.write<std::uint64_t>(items.size());
    for (const auto& [k, c] : items) {
        w.write(k);
        w.write(c);
    }
}

void VisitTable::load(BinaryReader& r) {
    r.expect("VIST");
    if ((r.read<std::uint8_t>() != 0) != quantize_)
        throw FormatError("checkpointed visit table uses different hashing");
    total_ = r.read<std::uint64_t>();
    const auto n = r.read<std::uint64_t>();
    counts_.clear();
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto k = r.read<std::uint64_t>();
        counts_[k] = r.read<std::uint64_t>();
    }
}

double state_novelty_bonus(VisitTable& table, const Observation& obs) {
    return 1.0 / std::sqrt(static_cast<double>(table.visit(obs)));
}

ForwardModel::ForwardModel(std::size_t observation_size, std::size_t action_count, const NetworkConfig& net,
                           AdamConfig adam, Rng& rng)
    : model_(make_predictor(observation_size, action_count, net, rng)),
      optimizer_(model_.parameter_count(), adam) {}

double ForwardModel::error(const Observation& s, std::size_t a, const Observation& next) const {
    if (s.size() != model_.input_dim() || next.size() != model_.head_output_dim(kStateHead))
        throw std::invalid_argument("forward model: observation size does not match the model");
    const Vector enc = model_.encode(s.data);
    const Vector pred = model_.head_forward(enc, a, kStateHead);
    double e = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        e += (pred[i] - next.data[i]) * (pred[i] - next.data[i]);
    return e / static_cast<double>(pred.size());
}

double ForwardModel::train(const Observation& s, std::size_t a, const Observation& next) {
    if (s.size() != model_.input_dim() || next.size() != model_.head_output_dim(kStateHead))
        throw std::invalid_argument("forward model: observation size does not match the model");
    ConditionedModel::Trace trace;
    const bool mask[2] = {true, false};
    model_.forward(s.data, a, trace, mask);
    const auto pred = model_.output(trace, kStateHead);
    const auto n = static_cast<double>(pred.size());
    Vector d(pred.size());
    double e = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = pred[i] - next.data[i];
        e += diff * diff;
        d[i] = 2.0 * diff / n;
    }
    e /= n;
    if (!std::isfinite(e))
        throw NonFiniteError("forward model error is not finite", 0);
    Vector g(model_.parameter_count(), 0.0);
    const std::span<const double> heads[2] = {d, {}};
    model_.backward(trace, heads, g);
    adam_step(model_.parameters(), g, optimizer_);
    return e;
}

void ForwardModel::save(BinaryWriter& w) const {
    model_.save(w);
    optimizer_.save(w);
}

void ForwardModel::load(BinaryReader& r) {
    auto m = ConditionedModel::load(r);
    if (m.parameter_count() != model_.parameter_count())
        throw FormatError("checkpointed forward model has a different shape");
    model_ = std::move(m);
    optimizer_ = OptimizerState::load(r);
}

double transition_novelty_bonus(ForwardModel& model, const Observation& s, std::size_t a, const Observation& next) {
    return model.train(s, a, next);
}

HierarchyConfig baseline_config(const HierarchyConfig& base, std::size_t env_actions) {
    HierarchyConfig c = base;
    c.levels = {LevelSpec{env_actions, 1, 0.0}};
    c.intrinsic_only = false;
    return c;
}

std::unique_ptr<ExplorationBonus> make_bonus(BaselineKind kind, std::size_t observation_size,
                                             std::size_t action_count, bool quantize, const NetworkConfig& net,
                                             AdamConfig adam, std::uint64_t seed) {
    switch (kind) {
    case BaselineKind::Ppo:
        return nullptr;
    case BaselineKind::StateNovelty:
        return std::make_unique<StateNoveltyBonus>(quantize);
    case BaselineKind::TransitionNovelty: {
        Rng rng(seed);
        return std::make_unique<TransitionNoveltyBonus>(ForwardModel(observation_size, action_count, net, adam, rng));
    }
    }
    throw std::invalid_argument("unknown baseline kind");
}

}  // namespace dehrl
