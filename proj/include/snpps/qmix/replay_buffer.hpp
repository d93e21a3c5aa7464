#pragma once

#include <cstddef>
#include <deque>
#include <numeric>
#include <vector>

#include "snpps/errors.hpp"
#include "snpps/netcore/tensors.hpp"
#include "snpps/rng.hpp"

namespace snpps::qmix {

using netcore::Matrix;
using netcore::Vector;

/// One whole episode. Index t runs over steps; states and observations carry
/// one extra entry for the state after the last step. Recurrent utilities are
/// replayed from a zero state at t = 0.
struct Episode {
    std::vector<Vector> states;                // T + 1
    std::vector<Matrix> observations;          // T + 1, obs_width x N
    std::vector<std::vector<int>> actions;     // T x N
    std::vector<double> rewards;               // T, team reward
    bool terminal = false;                     // last step ended the task (not a time limit)

    std::size_t length() const noexcept { return actions.size(); }

    void validate(std::size_t n_agents) const {
        const auto T = length();
        if (T == 0) throw UsageError("episode has no steps");
        if (states.size() != T + 1 || observations.size() != T + 1 || rewards.size() != T)
            throw UsageError("episode records are not aligned");
        for (const auto& a : actions)
            if (a.size() != n_agents) throw UsageError("episode step has the wrong number of actions");
        for (const auto& o : observations)
            if (static_cast<std::size_t>(o.cols()) != n_agents) throw UsageError("episode observation has the wrong agent count");
    }
};

/// FIFO store of whole episodes.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity_ == 0) throw ConfigError("qmix.buffer_capacity", "must be >= 1");
    }

    std::size_t size() const noexcept { return episodes_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool empty() const noexcept { return episodes_.empty(); }
    const Episode& operator[](std::size_t i) const { return episodes_.at(i); }

    void push(Episode e) {
        if (episodes_.size() == capacity_) episodes_.pop_front();
        episodes_.push_back(std::move(e));
    }

    /// `count` distinct episodes, uniformly without replacement.
    std::vector<const Episode*> sample(std::size_t count, Rng& rng) const {
        if (count == 0 || count > episodes_.size()) throw UsageError("cannot sample that many episodes");
        std::vector<std::size_t> idx(episodes_.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::vector<const Episode*> out;
        out.reserve(count);
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t j = k + rng.uniform_index(idx.size() - k);
            std::swap(idx[k], idx[j]);
            out.push_back(&episodes_[idx[k]]);
        }
        return out;
    }

private:
    std::size_t capacity_;
    std::deque<Episode> episodes_;
};

}  // namespace snpps::qmix
