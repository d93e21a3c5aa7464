#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace snpps::envs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Reset {
    Vector state;
    Matrix observations;  // observation_width x n_agents
};

struct Step {
    Vector state;
    Matrix observations;
    std::vector<double> rewards;  // per agent
    double team_reward = 0.0;
    bool done = false;      // episode over (terminal or time limit)
    bool terminal = false;  // true end of the task; no bootstrapping past it
};

/// Multi-agent environment contract. step() after done throws UsageError.
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::size_t n_agents() const = 0;
    virtual std::size_t observation_width() const = 0;
    virtual std::size_t state_width() const = 0;
    virtual std::size_t action_count() const = 0;

    virtual Reset reset() = 0;
    virtual Step step(std::span<const int> actions) = 0;
};

}  // namespace snpps::envs
