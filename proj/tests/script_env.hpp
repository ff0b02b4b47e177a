#pragma once

#include "dehrl/envs.hpp"

namespace testing {

// Fixed-length episodes with a constant reward per step. The observation encodes
// the step counter and the last action so that real outcomes vary.
class ScriptEnv final : public dehrl::Environment {
public:
    ScriptEnv(std::size_t actions, int episode_length, double reward)
        : actions_(actions), length_(episode_length), reward_(reward) {}

    std::string name() const override { return "script"; }
    std::size_t action_count() const override { return actions_; }
    std::array<std::size_t, 3> observation_shape() const override { return {1, 2, 3}; }
    dehrl::Observation reset() override {
        steps_ = 0;
        last_ = 0;
        ++episodes_;
        return observe();
    }
    dehrl::StepOutcome step(std::size_t action) override {
        if (action >= actions_)
            throw std::out_of_range("script env action");
        ++steps_;
        last_ = action;
        return {reward_, steps_ >= length_};
    }
    dehrl::Observation observe() const override {
        dehrl::Observation o(1, 2, 3);
        o.data = {steps_ / 64.0, (last_ + 1.0) / (actions_ + 1.0), 0.5, (steps_ % 3) / 3.0, 0.0, 1.0};
        return o;
    }
    std::uint64_t hash() const override {
        return static_cast<std::uint64_t>(steps_) * 1000003u + last_ * 101u + static_cast<std::uint64_t>(episodes_);
    }
    void save(dehrl::BinaryWriter& w) const override {
        w.write(steps_);
        w.write(static_cast<std::uint64_t>(last_));
        w.write(episodes_);
    }
    void load(dehrl::BinaryReader& r) override {
        steps_ = r.read<int>();
        last_ = static_cast<std::size_t>(r.read<std::uint64_t>());
        episodes_ = r.read<int>();
    }

private:
    std::size_t actions_;
    int length_;
    double reward_;
    int steps_ = 0;
    std::size_t last_ = 0;
    int episodes_ = 0;
};

}  // namespace testing
