#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snpps/envs/env.hpp"
#include "snpps/errors.hpp"
#include "snpps/rng.hpp"

namespace snpps::envs {

// Level-based foraging.
//
// Rules:
//  * actions: stay, up, down, left, right, forage.
//  * A move fails if the target is off-grid, holds a food, holds an agent, or
//    is targeted by another moving agent (all contenders stay put).
//  * A foraging agent attaches to its first adjacent live food, checked in
//    the order up, down, left, right. A food is collected when the levels of
//    its attached agents sum to at least its level.
//  * Each collector receives level_i / sum(collector levels) * food_level /
//    sum(all food levels), so one episode pays out at most 1 in total.
//  * The episode terminates when every food is gone and is truncated at max_steps.

enum LbfAction : int { kStay = 0, kUp = 1, kDown = 2, kLeft = 3, kRight = 4, kForage = 5 };
inline constexpr int kLbfActionCount = 6;

struct Cell {
    int row = 0;
    int col = 0;
    bool operator==(const Cell&) const = default;
};

struct LbfConfig {
    int rows = 8;
    int cols = 8;
    std::vector<int> agent_levels;
    std::vector<int> food_levels;
    int max_steps = 50;
    int sight = 2;  // observation radius

    void validate() const {
        if (rows < 2 || cols < 2) throw ConfigError("env.grid", "grid must be at least 2x2");
        if (agent_levels.empty()) throw ConfigError("env.agent_levels", "at least one agent required");
        if (food_levels.empty()) throw ConfigError("env.food_levels", "at least one food required");
        for (int l : agent_levels)
            if (l < 1) throw ConfigError("env.agent_levels", "levels must be >= 1");
        for (int l : food_levels)
            if (l < 1) throw ConfigError("env.food_levels", "levels must be >= 1");
        if (agent_levels.size() + food_levels.size() > static_cast<std::size_t>(rows * cols))
            throw ConfigError("env.grid", "not enough cells for agents and foods");
        const int total = std::accumulate(agent_levels.begin(), agent_levels.end(), 0);
        for (int l : food_levels)
            if (l > total) throw ConfigError("env.food_levels", "food level exceeds the sum of all agent levels");
        if (max_steps < 1) throw ConfigError("env.max_steps", "must be >= 1");
        if (sight < 0) throw ConfigError("env.sight", "must be >= 0");
    }

    std::size_t n_agents() const { return agent_levels.size(); }
    int window() const { return 2 * sight + 1; }
    std::size_t observation_width() const { return static_cast<std::size_t>(3 * window() * window()); }
    std::size_t state_width() const { return static_cast<std::size_t>(2 * rows * cols); }
};

/// Named presets. The "-desk" variants keep the level structure on a 5x5 grid
/// with three agents and two foods.
inline LbfConfig lbf_preset(std::string_view name) {
    if (name == "LBF1") return {8, 8, {1, 1, 1, 2, 2, 2}, {3, 3, 3, 3, 3, 3}, 50, 2};
    if (name == "LBF2") return {8, 8, {1, 1, 2, 2, 3, 3}, {4, 4, 4, 4, 4, 4}, 50, 2};
    if (name == "LBF1-desk") return {5, 5, {1, 1, 2}, {3, 3}, 25, 2};
    if (name == "LBF2-desk") return {5, 5, {1, 2, 3}, {4, 4}, 25, 2};
    throw ConfigError("env.preset", "unknown LBF preset '" + std::string(name) + "'");
}

struct LbfState {
    std::vector<Cell> agents;
    std::vector<Cell> foods;
    std::vector<bool> food_alive;
    int t = 0;
    bool done = false;

    bool operator==(const LbfState&) const = default;
};

struct LbfTransition {
    LbfState next;
    std::vector<double> rewards;
    bool done = false;
    bool terminal = false;
};

namespace detail {

inline bool in_grid(const LbfConfig& c, Cell p) { return p.row >= 0 && p.row < c.rows && p.col >= 0 && p.col < c.cols; }

inline Cell moved(Cell p, int action) {
    switch (action) {
        case kUp: return {p.row - 1, p.col};
        case kDown: return {p.row + 1, p.col};
        case kLeft: return {p.row, p.col - 1};
        case kRight: return {p.row, p.col + 1};
        default: return p;
    }
}

inline int food_at(const LbfState& s, Cell p) {
    for (std::size_t f = 0; f < s.foods.size(); ++f)
        if (s.food_alive[f] && s.foods[f] == p) return static_cast<int>(f);
    return -1;
}

inline int agent_at(const LbfState& s, Cell p) {
    for (std::size_t a = 0; a < s.agents.size(); ++a)
        if (s.agents[a] == p) return static_cast<int>(a);
    return -1;
}

}  // namespace detail

/// Pure transition function.
inline LbfTransition lbf_step(const LbfConfig& cfg, const LbfState& state, std::span<const int> actions) {
    if (state.done) throw UsageError("lbf_step called on a finished episode");
    const std::size_t n = cfg.n_agents();
    if (actions.size() != n) throw UsageError("expected one action per agent");
    for (int a : actions)
        if (a < 0 || a >= kLbfActionCount) throw UsageError("malformed LBF action index " + std::to_string(a));

    LbfTransition out;
    out.next = state;
    out.rewards.assign(n, 0.0);

    // Movement.
    std::vector<Cell> target(n);
    std::vector<bool> wants(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        target[i] = state.agents[i];
        if (actions[i] < kUp || actions[i] > kRight) continue;
        const Cell c = detail::moved(state.agents[i], actions[i]);
        if (!detail::in_grid(cfg, c) || detail::food_at(state, c) >= 0 || detail::agent_at(state, c) >= 0) continue;
        target[i] = c;
        wants[i] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!wants[i]) continue;
        bool clash = false;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && wants[j] && target[j] == target[i]) clash = true;
        if (!clash) out.next.agents[i] = target[i];
    }

    // Foraging, evaluated on post-move positions.
    const int total_food =
        std::accumulate(cfg.food_levels.begin(), cfg.food_levels.end(), 0);
    std::vector<std::vector<std::size_t>> attached(state.foods.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (actions[i] != kForage) continue;
        for (int dir : {kUp, kDown, kLeft, kRight}) {
            const int f = detail::food_at(out.next, detail::moved(out.next.agents[i], dir));
            if (f >= 0) {
                attached[static_cast<std::size_t>(f)].push_back(i);
                break;
            }
        }
    }
    for (std::size_t f = 0; f < state.foods.size(); ++f) {
        if (attached[f].empty()) continue;
        int level_sum = 0;
        for (auto i : attached[f]) level_sum += cfg.agent_levels[i];
        const int food_level = cfg.food_levels[f];
        if (level_sum < food_level) continue;
        out.next.food_alive[f] = false;
        for (auto i : attached[f])
            out.rewards[i] += static_cast<double>(cfg.agent_levels[i]) / level_sum * food_level / total_food;
    }

    out.next.t = state.t + 1;
    out.terminal = std::none_of(out.next.food_alive.begin(), out.next.food_alive.end(), [](bool b) { return b; });
    out.done = out.terminal || out.next.t >= cfg.max_steps;
    out.next.done = out.done;
    return out;
}

/// Random initial state: foods on interior cells, not 8-adjacent to each other
/// when possible; agents on the remaining free cells.
inline LbfState lbf_random_state(const LbfConfig& cfg, Rng& rng) {
    LbfState s;
    auto occupied = [&](Cell c) { return detail::agent_at(s, c) >= 0 || detail::food_at(s, c) >= 0; };
    auto near_food = [&](Cell c) {
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc)
                if (detail::food_at(s, {c.row + dr, c.col + dc}) >= 0) return true;
        return false;
    };
    auto random_cell = [&](int lo_r, int hi_r, int lo_c, int hi_c) {
        return Cell{lo_r + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(hi_r - lo_r))),
                    lo_c + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(hi_c - lo_c)))};
    };
    const bool interior = cfg.rows > 2 && cfg.cols > 2;
    for (std::size_t f = 0; f < cfg.food_levels.size(); ++f) {
        Cell c{};
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && interior && !placed; ++attempt) {
            c = random_cell(1, cfg.rows - 1, 1, cfg.cols - 1);
            placed = !near_food(c);
        }
        while (!placed) {
            c = random_cell(0, cfg.rows, 0, cfg.cols);
            placed = !occupied(c);
        }
        s.foods.push_back(c);
        s.food_alive.push_back(true);
    }
    for (std::size_t a = 0; a < cfg.n_agents(); ++a) {
        Cell c{};
        do c = random_cell(0, cfg.rows, 0, cfg.cols);
        while (occupied(c));
        s.agents.push_back(c);
    }
    return s;
}

/// Per-agent local windows, channel-major: [agent levels | food levels | self level].
/// Levels are divided by the largest agent (resp. food) level; off-grid cells read -1
/// in the agent and food channels.
inline Matrix lbf_observations(const LbfConfig& cfg, const LbfState& s) {
    const int w = cfg.window();
    const int area = w * w;
    const double amax = *std::max_element(cfg.agent_levels.begin(), cfg.agent_levels.end());
    const double fmax = *std::max_element(cfg.food_levels.begin(), cfg.food_levels.end());
    Matrix obs = Matrix::Zero(static_cast<Eigen::Index>(cfg.observation_width()),
                              static_cast<Eigen::Index>(cfg.n_agents()));
    for (std::size_t i = 0; i < cfg.n_agents(); ++i) {
        auto col = obs.col(static_cast<Eigen::Index>(i));
        const Cell me = s.agents[i];
        for (int dr = -cfg.sight; dr <= cfg.sight; ++dr)
            for (int dc = -cfg.sight; dc <= cfg.sight; ++dc) {
                const Cell c{me.row + dr, me.col + dc};
                const int idx = (dr + cfg.sight) * w + (dc + cfg.sight);
                if (!detail::in_grid(cfg, c)) {
                    col[idx] = -1.0;
                    col[area + idx] = -1.0;
                    continue;
                }
                if (const int a = detail::agent_at(s, c); a >= 0) col[idx] = cfg.agent_levels[static_cast<std::size_t>(a)] / amax;
                if (const int f = detail::food_at(s, c); f >= 0) col[area + idx] = cfg.food_levels[static_cast<std::size_t>(f)] / fmax;
            }
        col[2 * area + cfg.sight * w + cfg.sight] = cfg.agent_levels[i] / amax;
    }
    return obs;
}

/// Full-grid state: [agent level grid | food level grid], normalized like observations.
inline Vector lbf_global_state(const LbfConfig& cfg, const LbfState& s) {
    const int area = cfg.rows * cfg.cols;
    const double amax = *std::max_element(cfg.agent_levels.begin(), cfg.agent_levels.end());
    const double fmax = *std::max_element(cfg.food_levels.begin(), cfg.food_levels.end());
    Vector v = Vector::Zero(2 * area);
    for (std::size_t a = 0; a < s.agents.size(); ++a)
        v[s.agents[a].row * cfg.cols + s.agents[a].col] = cfg.agent_levels[a] / amax;
    for (std::size_t f = 0; f < s.foods.size(); ++f)
        if (s.food_alive[f]) v[area + s.foods[f].row * cfg.cols + s.foods[f].col] = cfg.food_levels[f] / fmax;
    return v;
}

class LbfEnv final : public Environment {
public:
    LbfEnv(LbfConfig cfg, Seed seed) : cfg_(std::move(cfg)), rng_(seed) {
        cfg_.validate();
        state_.done = true;
    }

    std::size_t n_agents() const override { return cfg_.n_agents(); }
    std::size_t observation_width() const override { return cfg_.observation_width(); }
    std::size_t state_width() const override { return cfg_.state_width(); }
    std::size_t action_count() const override { return kLbfActionCount; }

    Reset reset() override {
        state_ = lbf_random_state(cfg_, rng_);
        return {lbf_global_state(cfg_, state_), lbf_observations(cfg_, state_)};
    }

    Step step(std::span<const int> actions) override {
        if (state_.done) throw UsageError("step() called after the episode ended; call reset()");
        auto tr = lbf_step(cfg_, state_, actions);
        state_ = std::move(tr.next);
        Step s;
        s.state = lbf_global_state(cfg_, state_);
        s.observations = lbf_observations(cfg_, state_);
        s.team_reward = std::accumulate(tr.rewards.begin(), tr.rewards.end(), 0.0);
        s.rewards = std::move(tr.rewards);
        s.done = tr.done;
        s.terminal = tr.terminal;
        return s;
    }

    const LbfConfig& config() const noexcept { return cfg_; }
    const LbfState& state() const noexcept { return state_; }

private:
    LbfConfig cfg_;
    Rng rng_;
    LbfState state_;
};

}  // namespace snpps::envs
