#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "snpps/envs/env.hpp"
#include "snpps/errors.hpp"
#include "snpps/rng.hpp"

namespace snpps::envs {

/// Single-step game in which every agent sees the same constant observation and
/// the team scores 1 only if the joint action equals a hidden assignment of
/// pairwise-distinct actions. Identical observations force identical greedy
/// actions under full sharing, so only agent-specific networks can score.
struct CoordGameConfig {
    std::size_t n_agents = 3;
    std::size_t n_actions = 3;
    std::size_t observation_width = 4;

    void validate() const {
        if (n_agents < 1) throw ConfigError("env.n_agents", "must be >= 1");
        if (n_actions < n_agents)
            throw ConfigError("env.n_actions", "needs at least as many actions as agents for a distinct assignment");
        if (observation_width < 1) throw ConfigError("env.observation_width", "must be >= 1");
    }
};

/// Hidden target: a random injective agent -> action map.
inline std::vector<int> coord_game_target(const CoordGameConfig& cfg, Rng& rng) {
    std::vector<int> actions(cfg.n_actions);
    std::iota(actions.begin(), actions.end(), 0);
    for (std::size_t i = 0; i < cfg.n_agents; ++i) std::swap(actions[i], actions[i + rng.uniform_index(cfg.n_actions - i)]);
    actions.resize(cfg.n_agents);
    return actions;
}

/// Team reward of one joint action.
inline double coord_game_step(std::span<const int> target, std::span<const int> actions) {
    if (actions.size() != target.size()) throw UsageError("expected one action per agent");
    for (std::size_t i = 0; i < actions.size(); ++i)
        if (actions[i] != target[i]) return 0.0;
    return 1.0;
}

class CoordGameEnv final : public Environment {
public:
    CoordGameEnv(CoordGameConfig cfg, Seed seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        target_ = coord_game_target(cfg_, rng);
    }

    std::size_t n_agents() const override { return cfg_.n_agents; }
    std::size_t observation_width() const override { return cfg_.observation_width; }
    std::size_t state_width() const override { return cfg_.observation_width; }
    std::size_t action_count() const override { return cfg_.n_actions; }

    Reset reset() override {
        done_ = false;
        return {Vector::Ones(static_cast<Eigen::Index>(cfg_.observation_width)), observations()};
    }

    Step step(std::span<const int> actions) override {
        if (done_) throw UsageError("step() called after the episode ended; call reset()");
        for (int a : actions)
            if (a < 0 || static_cast<std::size_t>(a) >= cfg_.n_actions) throw UsageError("action out of range");
        const double r = coord_game_step(target_, actions);
        done_ = true;
        Step s;
        s.state = Vector::Ones(static_cast<Eigen::Index>(cfg_.observation_width));
        s.observations = observations();
        s.rewards.assign(cfg_.n_agents, r);
        s.team_reward = r;
        s.done = true;
        s.terminal = true;
        return s;
    }

    const std::vector<int>& target() const noexcept { return target_; }
    const CoordGameConfig& config() const noexcept { return cfg_; }

private:
    Matrix observations() const {
        return Matrix::Ones(static_cast<Eigen::Index>(cfg_.observation_width), static_cast<Eigen::Index>(cfg_.n_agents));
    }

    CoordGameConfig cfg_;
    std::vector<int> target_;
    bool done_ = true;
};

}  // namespace snpps::envs
