#pragma once

#include <cstddef>
#include <vector>

#include "snpps/errors.hpp"
#include "snpps/netcore/tensors.hpp"

namespace snpps::maa2c {

using netcore::Matrix;
using netcore::Vector;

struct AdvantageResult {
    Matrix advantages;  // T x N
    Matrix returns;     // T x N, also the value targets
};

/// n-step advantages over one rollout segment.
///
/// rewards, values: T x N (step-major, one column per agent). bootstrap: V of
/// the state after the last step, per agent. terminal[t] drops everything past
/// step t. Each step bootstraps from the end of the segment, so step t looks
/// T - t rewards ahead:
///   R_t = r_t + gamma * (1 - terminal_t) * R_{t+1},  R_T = bootstrap
///   A_t = R_t - V_t
inline AdvantageResult n_step_advantage(const Matrix& rewards, const Matrix& values, const Vector& bootstrap,
                                        const std::vector<bool>& terminal, double gamma) {
    const auto T = rewards.rows(), N = rewards.cols();
    if (values.rows() != T || values.cols() != N) throw UsageError("values must match rewards in shape");
    if (bootstrap.size() != N) throw UsageError("one bootstrap value per agent required");
    if (terminal.size() != static_cast<std::size_t>(T)) throw UsageError("one terminal flag per step required");
    if (gamma < 0.0 || gamma > 1.0) throw UsageError("gamma must lie in [0, 1]");

    AdvantageResult out;
    out.returns.resize(T, N);
    Vector next = bootstrap;
    for (auto t = T - 1; t >= 0; --t) {
        const double keep = terminal[static_cast<std::size_t>(t)] ? 0.0 : gamma;
        next = rewards.row(t).transpose() + keep * next;
        out.returns.row(t) = next.transpose();
    }
    out.advantages = out.returns - values;
    return out;
}

}  // namespace snpps::maa2c
