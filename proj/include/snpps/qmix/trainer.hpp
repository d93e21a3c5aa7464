#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "snpps/envs/env.hpp"
#include "snpps/errors.hpp"
#include "snpps/netcore/optimizer.hpp"
#include "snpps/qmix/mixer.hpp"
#include "snpps/qmix/replay_buffer.hpp"
#include "snpps/rng.hpp"
#include "snpps/sharednet/shared_network.hpp"

namespace snpps::qmix {

using sharednet::SharedAgentNetwork;

struct QmixConfig {
    double gamma = 0.99;
    std::size_t buffer_capacity = 5000;  // episodes
    std::size_t batch_size = 32;         // episodes per update
    std::size_t min_fill = 32;           // no updates until the buffer holds this many episodes
    std::size_t updates_per_episode = 1;
    std::size_t target_update_interval = 200;  // in updates
    double epsilon_start = 1.0;
    double epsilon_finish = 0.05;
    std::size_t epsilon_anneal_steps = 50000;  // env steps
    MixerConfig mixer;
    netcore::OptimizerConfig optimizer;

    void validate() const {
        if (gamma < 0.0 || gamma > 1.0) throw ConfigError("qmix.gamma", "must lie in [0, 1]");
        if (buffer_capacity < 1) throw ConfigError("qmix.buffer_capacity", "must be >= 1");
        if (batch_size < 1) throw ConfigError("qmix.batch_size", "must be >= 1");
        if (batch_size > buffer_capacity) throw ConfigError("qmix.batch_size", "exceeds buffer capacity");
        if (target_update_interval < 1) throw ConfigError("qmix.target_update_interval", "must be >= 1");
        if (epsilon_start < 0.0 || epsilon_start > 1.0) throw ConfigError("qmix.epsilon_start", "must lie in [0, 1]");
        if (epsilon_finish < 0.0 || epsilon_finish > 1.0) throw ConfigError("qmix.epsilon_finish", "must lie in [0, 1]");
        if (!(optimizer.learning_rate > 0.0)) throw ConfigError("qmix.learning_rate", "must be > 0");
        mixer.validate();
    }
};

struct MixerTdResult {
    double loss = 0.0;
    MixerGrads mixer_grads;
    Matrix d_q;  // dL/dQ^i, N x M
};

struct TdLossResult {
    double loss = 0.0;
    std::size_t transitions = 0;
    std::vector<GradientStore> utility_grads;  // exact dL/dtheta per root, not yet averaged over agents
    MixerGrads mixer_grads;
};

struct QmixEpisodeStats {
    double team_return = 0.0;
    std::size_t length = 0;
    double epsilon = 0.0;
    std::vector<double> losses;  // one per gradient step taken after the episode
};

/// Per agent: argmax of its utility with probability 1 - epsilon, uniform
/// otherwise. Ties go to the lowest index. `q` is actions x N.
inline std::vector<int> epsilon_greedy(const Matrix& q, double epsilon, Rng& rng) {
    if (epsilon < 0.0 || epsilon > 1.0) throw UsageError("epsilon must lie in [0, 1]");
    std::vector<int> a(static_cast<std::size_t>(q.cols()));
    for (Eigen::Index i = 0; i < q.cols(); ++i) {
        if (epsilon > 0.0 && rng.uniform() < epsilon) {
            a[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(q.rows())));
            continue;
        }
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < q.rows(); ++k)
            if (q(k, i) > q(best, i)) best = k;
        a[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return a;
}

class QmixTrainer {
public:
    QmixTrainer(SharedAgentNetwork utilities, std::size_t state_width, QmixConfig cfg, Seed seed)
        : utilities_(std::move(utilities)), cfg_(cfg), buffer_(cfg.buffer_capacity), optimizer_(cfg.optimizer),
          replay_rng_(derive_seed(seed, "replay")), explore_rng_(derive_seed(seed, "exploration")) {
        cfg_.validate();
        mixer_ = MixingNetwork(utilities_.n_agents(), state_width, cfg_.mixer, derive_seed(seed, "mixer"));
        refresh_targets();
    }

    const SharedAgentNetwork& utilities() const noexcept { return utilities_; }
    SharedAgentNetwork& utilities() noexcept { return utilities_; }
    const SharedAgentNetwork& target_utilities() const noexcept { return target_utilities_; }
    const MixingNetwork& mixer() const noexcept { return mixer_; }
    MixingNetwork& mixer() noexcept { return mixer_; }
    const MixingNetwork& target_mixer() const noexcept { return target_mixer_; }
    const ReplayBuffer& buffer() const noexcept { return buffer_; }
    const QmixConfig& config() const noexcept { return cfg_; }
    std::size_t n_agents() const { return utilities_.n_agents(); }
    std::size_t env_steps() const noexcept { return env_steps_; }
    std::size_t updates() const noexcept { return updates_; }

    double epsilon() const {
        if (cfg_.epsilon_anneal_steps == 0) return cfg_.epsilon_finish;
        const double frac = std::min(1.0, static_cast<double>(env_steps_) / static_cast<double>(cfg_.epsilon_anneal_steps));
        return cfg_.epsilon_start + frac * (cfg_.epsilon_finish - cfg_.epsilon_start);
    }

    /// Utilities for one joint step (actions x N). `hidden` carries the
    /// recurrent state across calls; pass an empty matrix at episode start.
    Matrix utilities_step(const Matrix& observations, Matrix& hidden) const {
        const auto ids = agent_ids(1);
        auto r = utilities_.forward(ids, observations, hidden);
        hidden = std::move(r.state);
        return r.output;
    }

    void refresh_targets() {
        target_utilities_ = utilities_;
        target_mixer_ = mixer_;
    }

    void store(Episode e) {
        e.validate(n_agents());
        buffer_.push(std::move(e));
    }

    /// Mixer half of the TD loss given the chosen utilities `q` (N x M) and
    /// fixed targets. Independent of how the utilities were produced.
    MixerTdResult mixer_td(const Matrix& states, const Matrix& q, const Vector& targets) const {
        if (targets.size() != q.cols()) throw UsageError("one target per transition required");
        MixerTrace tr;
        const Vector qjt = mixer_.mix(states, q, &tr);
        const Vector delta = qjt - targets;
        const double m = static_cast<double>(q.cols());
        MixerTdResult out;
        out.loss = delta.squaredNorm() / m;
        auto mb = mixer_.backward(tr, (2.0 / m) * delta);
        out.mixer_grads = std::move(mb.grads);
        out.d_q = std::move(mb.d_q);
        return out;
    }

    /// Mean squared TD error over every step of every episode in the batch,
    /// with exact gradients w.r.t. the online utilities and mixer.
    TdLossResult td_loss(std::span<const Episode* const> batch) const {
        if (batch.empty()) throw UsageError("td_loss needs a non-empty batch");
        std::size_t T = 0, M = 0;
        for (const auto* e : batch) {
            e->validate(n_agents());
            T = std::max(T, e->length());
            M += e->length();
        }
        const auto N = static_cast<Eigen::Index>(n_agents());
        const auto S = static_cast<Eigen::Index>(mixer_.state_width());

        auto online = unroll(utilities_, batch, T, true);
        auto target = unroll(target_utilities_, batch, T + 1, false);

        Matrix states(S, static_cast<Eigen::Index>(M)), next_states(S, static_cast<Eigen::Index>(M));
        Matrix q(N, static_cast<Eigen::Index>(M)), q_next(N, static_cast<Eigen::Index>(M));
        Vector rewards(static_cast<Eigen::Index>(M)), keep(static_cast<Eigen::Index>(M));
        Eigen::Index m = 0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const auto& e = *batch[b];
            const Eigen::Index c0 = static_cast<Eigen::Index>(b) * N;
            for (std::size_t t = 0; t < e.length(); ++t, ++m) {
                states.col(m) = e.states[t];
                next_states.col(m) = e.states[t + 1];
                for (Eigen::Index i = 0; i < N; ++i) {
                    const int a = e.actions[t][static_cast<std::size_t>(i)];
                    if (a < 0 || a >= online.q[t].rows()) throw UsageError("action index out of range in episode");
                    q(i, m) = online.q[t](a, c0 + i);
                    q_next(i, m) = target.q[t + 1].col(c0 + i).maxCoeff();
                }
                rewards[m] = e.rewards[t];
                keep[m] = (e.terminal && t + 1 == e.length()) ? 0.0 : cfg_.gamma;
            }
        }
        const Vector y = rewards + keep.cwiseProduct(target_mixer_.mix(next_states, q_next));
        auto mt = mixer_td(states, q, y);

        TdLossResult out;
        out.loss = mt.loss;
        out.transitions = M;
        out.mixer_grads = std::move(mt.mixer_grads);
        if (!std::isfinite(out.loss)) throw TrainingError("non-finite QMIX TD loss");

        // Route dL/dQ^i back to the chosen action's output, then through time.
        const auto A = online.q.front().rows();
        const auto cols = static_cast<Eigen::Index>(batch.size()) * N;
        std::vector<Matrix> d_out(T, Matrix::Zero(A, cols));
        m = 0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const auto& e = *batch[b];
            const Eigen::Index c0 = static_cast<Eigen::Index>(b) * N;
            for (std::size_t t = 0; t < e.length(); ++t, ++m)
                for (Eigen::Index i = 0; i < N; ++i) d_out[t](e.actions[t][static_cast<std::size_t>(i)], c0 + i) += mt.d_q(i, m);
        }
        out.utility_grads = utilities_.zero_gradients();
        Matrix d_state;
        for (std::size_t t = T; t-- > 0;)
            d_state = utilities_.backward_into(out.utility_grads, online.traces[t], d_out[t], d_state);
        return out;
    }

    /// One gradient step on a sampled batch. Utility gradients are averaged
    /// over the agents sharing each root before the joint clipped step.
    double update() {
        const std::size_t need = std::max(cfg_.batch_size, cfg_.min_fill);
        if (buffer_.size() < need) throw UsageError("replay buffer below the minimum fill");
        const auto batch = buffer_.sample(cfg_.batch_size, replay_rng_);
        auto r = td_loss(batch);
        utilities_.normalize(r.utility_grads);
        std::vector<netcore::ParameterStore*> ps;
        std::vector<GradientStore*> gs;
        for (std::size_t k = 0; k < r.utility_grads.size(); ++k) {
            ps.push_back(&utilities_.roots()[k]);
            gs.push_back(&r.utility_grads[k]);
        }
        for (std::size_t k = 0; k < kMixerParts; ++k) {
            ps.push_back(&mixer_.params()[k]);
            gs.push_back(&r.mixer_grads[k]);
        }
        optimizer_.step(ps, gs);
        if (++updates_ % cfg_.target_update_interval == 0) refresh_targets();
        return r.loss;
    }

    /// Rolls out one epsilon-greedy episode, stores it and trains once the
    /// buffer is warm.
    QmixEpisodeStats train_episode(envs::Environment& env) {
        check_env(env);
        QmixEpisodeStats st;
        st.epsilon = epsilon();
        Episode ep;
        auto rs = env.reset();
        ep.states.push_back(rs.state);
        ep.observations.push_back(rs.observations);
        Matrix hidden;
        for (;;) {
            const Matrix q = utilities_step(ep.observations.back(), hidden);
            auto actions = epsilon_greedy(q, epsilon(), explore_rng_);
            auto s = env.step(actions);
            ++env_steps_;
            st.team_return += s.team_reward;
            ep.actions.push_back(std::move(actions));
            ep.rewards.push_back(s.team_reward);
            ep.states.push_back(std::move(s.state));
            ep.observations.push_back(std::move(s.observations));
            if (s.done) {
                ep.terminal = s.terminal;
                break;
            }
        }
        st.length = ep.length();
        store(std::move(ep));
        if (buffer_.size() >= std::max(cfg_.batch_size, cfg_.min_fill))
            for (std::size_t k = 0; k < cfg_.updates_per_episode; ++k) st.losses.push_back(update());
        return st;
    }

    /// Mean team return of greedy (epsilon 0) episodes.
    double evaluate_greedy(envs::Environment& env, std::size_t episodes) const {
        check_env(env);
        if (episodes == 0) throw UsageError("need at least one evaluation episode");
        Rng unused(0);
        double total = 0.0;
        for (std::size_t k = 0; k < episodes; ++k) {
            auto rs = env.reset();
            Matrix obs = rs.observations, hidden;
            for (;;) {
                auto s = env.step(epsilon_greedy(utilities_step(obs, hidden), 0.0, unused));
                total += s.team_reward;
                if (s.done) break;
                obs = std::move(s.observations);
            }
        }
        return total / static_cast<double>(episodes);
    }

private:
    struct Unrolled {
        std::vector<Matrix> q;  // per step, actions x (B*N)
        std::vector<sharednet::BatchTrace> traces;
    };

    std::vector<std::size_t> agent_ids(std::size_t copies) const {
        std::vector<std::size_t> ids;
        ids.reserve(copies * n_agents());
        for (std::size_t b = 0; b < copies; ++b)
            for (std::size_t i = 0; i < n_agents(); ++i) ids.push_back(i);
        return ids;
    }

    // Episodes shorter than `steps` are padded with zero observations; their
    // padded outputs never enter the loss.
    Unrolled unroll(const SharedAgentNetwork& net, std::span<const Episode* const> batch, std::size_t steps,
                    bool keep_traces) const {
        const auto N = static_cast<Eigen::Index>(n_agents());
        const auto W = static_cast<Eigen::Index>(net.observation_width());
        const auto ids = agent_ids(batch.size());
        Unrolled u;
        Matrix hidden;
        for (std::size_t t = 0; t < steps; ++t) {
            Matrix obs = Matrix::Zero(W, static_cast<Eigen::Index>(batch.size()) * N);
            for (std::size_t b = 0; b < batch.size(); ++b)
                if (t < batch[b]->observations.size())
                    obs.middleCols(static_cast<Eigen::Index>(b) * N, N) = batch[b]->observations[t];
            auto r = net.forward(ids, obs, hidden);
            hidden = std::move(r.state);
            u.q.push_back(std::move(r.output));
            if (keep_traces) u.traces.push_back(std::move(r.trace));
        }
        return u;
    }

    void check_env(const envs::Environment& env) const {
        if (env.n_agents() != n_agents()) throw UsageError("environment agent count differs from the utilities");
        if (env.observation_width() != utilities_.observation_width())
            throw UsageError("environment observation width differs from the utilities");
        if (env.state_width() != mixer_.state_width()) throw UsageError("environment state width differs from the mixer");
        if (env.action_count() != utilities_.output_width())
            throw UsageError("environment action count differs from the utility outputs");
    }

    SharedAgentNetwork utilities_;
    SharedAgentNetwork target_utilities_;
    MixingNetwork mixer_;
    MixingNetwork target_mixer_;
    QmixConfig cfg_;
    ReplayBuffer buffer_;
    netcore::Optimizer optimizer_;
    Rng replay_rng_;
    Rng explore_rng_;
    std::size_t env_steps_ = 0;
    std::size_t updates_ = 0;
};

}  // namespace snpps::qmix
