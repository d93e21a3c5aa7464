#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "snpps/envs/env.hpp"
#include "snpps/errors.hpp"
#include "snpps/maa2c/advantage.hpp"
#include "snpps/netcore/optimizer.hpp"
#include "snpps/rng.hpp"
#include "snpps/sharednet/shared_network.hpp"

namespace snpps::maa2c {

using sharednet::SharedAgentNetwork;
using netcore::GradientStore;

struct A2cConfig {
    double gamma = 0.99;
    std::size_t n_steps = 5;
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    netcore::OptimizerConfig optimizer;  // one instance each for actor and critic

    void validate() const {
        if (gamma < 0.0 || gamma > 1.0) throw ConfigError("a2c.gamma", "must lie in [0, 1]");
        if (n_steps < 1) throw ConfigError("a2c.n_steps", "must be >= 1");
        if (entropy_coef < 0.0) throw ConfigError("a2c.entropy_coef", "must be >= 0");
        if (value_coef < 0.0) throw ConfigError("a2c.value_coef", "must be >= 0");
        if (!(optimizer.learning_rate > 0.0)) throw ConfigError("a2c.learning_rate", "must be > 0");
    }
};

/// Up to n consecutive steps of one episode, all agents.
struct Segment {
    std::vector<Matrix> observations;  // per step, obs_width x N
    std::vector<std::vector<int>> actions;
    std::vector<std::vector<double>> rewards;
    std::vector<bool> terminal;
    Matrix bootstrap_observations;  // obs after the last step; empty when it ended the task

    std::size_t steps() const { return observations.size(); }
};

struct ActionSample {
    std::vector<int> actions;
    Vector log_probs;
    Vector entropies;
};

struct LossResult {
    double total = 0.0;    // the objective whose gradients are returned
    double policy = 0.0;   // mean of -A log pi
    double value = 0.0;    // mean squared error
    double entropy = 0.0;  // mean entropy
    std::vector<GradientStore> actor_grads;
    std::vector<GradientStore> critic_grads;
};

struct UpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double actor_grad_norm = 0.0;
    double critic_grad_norm = 0.0;
};

/// Column-wise log-softmax.
inline Matrix log_softmax(const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double m = z.col(c).maxCoeff();
        const double lse = m + std::log((z.col(c).array() - m).exp().sum());
        out.col(c) = z.col(c).array() - lse;
    }
    return out;
}

inline Matrix softmax(const Matrix& z) { return log_softmax(z).array().exp(); }

class A2cTrainer {
public:
    A2cTrainer(SharedAgentNetwork actor, SharedAgentNetwork critic, A2cConfig cfg)
        : actor_(std::move(actor)), critic_(std::move(critic)), cfg_(cfg),
          actor_opt_(cfg.optimizer), critic_opt_(cfg.optimizer) {
        cfg_.validate();
        if (actor_.n_agents() != critic_.n_agents()) throw ConfigError("a2c", "actor and critic agent counts differ");
        if (critic_.output_width() != 1) throw ConfigError("a2c.critic", "critic must have a single output");
        if (actor_.state_width() != 0 || critic_.state_width() != 0)
            throw ConfigError("a2c", "recurrent actors and critics are not supported");
        for (std::size_t i = 0; i < actor_.n_agents(); ++i) ids_.push_back(i);
    }

    const SharedAgentNetwork& actor() const noexcept { return actor_; }
    const SharedAgentNetwork& critic() const noexcept { return critic_; }
    SharedAgentNetwork& actor() noexcept { return actor_; }
    SharedAgentNetwork& critic() noexcept { return critic_; }
    const A2cConfig& config() const noexcept { return cfg_; }
    std::size_t n_agents() const { return actor_.n_agents(); }

    /// Raw logits, action_count x N.
    Matrix logits(const Matrix& obs) const { return actor_.forward(ids_, obs).output; }

    Matrix policy(const Matrix& obs) const { return softmax(checked(logits(obs))); }

    Vector values(const Matrix& obs) const { return critic_.forward(ids_, obs).output.row(0).transpose(); }

    ActionSample sample_actions(const Matrix& obs, Rng& rng) const {
        const Matrix lp = log_softmax(checked(logits(obs)));
        ActionSample s;
        s.actions.resize(n_agents());
        s.log_probs.resize(static_cast<Eigen::Index>(n_agents()));
        s.entropies.resize(static_cast<Eigen::Index>(n_agents()));
        for (Eigen::Index i = 0; i < lp.cols(); ++i) {
            const Vector p = lp.col(i).array().exp();
            const double u = rng.uniform();
            double acc = 0.0;
            Eigen::Index pick = -1;
            for (Eigen::Index a = 0; a < p.size(); ++a) {
                if (p[a] <= 0.0) continue;
                pick = a;  // last action with mass absorbs rounding in the cumulative sum
                acc += p[a];
                if (u < acc) break;
            }
            s.actions[static_cast<std::size_t>(i)] = static_cast<int>(pick);
            s.log_probs[i] = lp(pick, i);
            s.entropies[i] = -(p.array() * lp.col(i).array()).sum();
        }
        return s;
    }

    /// Mode of each agent's policy; ties go to the lowest index.
    std::vector<int> greedy_actions(const Matrix& obs) const {
        const Matrix z = checked(logits(obs));
        std::vector<int> a(n_agents());
        for (Eigen::Index i = 0; i < z.cols(); ++i) {
            Eigen::Index best = 0;
            for (Eigen::Index k = 1; k < z.rows(); ++k)
                if (z(k, i) > z(best, i)) best = k;
            a[static_cast<std::size_t>(i)] = static_cast<int>(best);
        }
        return a;
    }

    /// Advantages and returns under the current critic.
    AdvantageResult targets(const Segment& seg) const {
        const Matrix obs = stack(seg);
        return advantages_from(seg, critic_.forward(column_agents(seg.steps()), obs).output);
    }

    /// Loss and normalized root gradients with the given advantages/targets held fixed.
    LossResult loss(const Segment& seg, const AdvantageResult& frozen) const { return compute(seg, &frozen); }

    UpdateStats update(const Segment& seg) {
        auto r = compute(seg, nullptr);
        UpdateStats st;
        st.policy_loss = r.policy;
        st.value_loss = r.value;
        st.entropy = r.entropy;
        st.actor_grad_norm = step(actor_opt_, actor_, r.actor_grads);
        st.critic_grad_norm = step(critic_opt_, critic_, r.critic_grads);
        return st;
    }

private:
    Matrix checked(Matrix z) const {
        if (!z.allFinite()) {
            std::ostringstream os;
            os << "non-finite actor logits:";
            for (Eigen::Index i = 0; i < z.cols(); ++i) {
                os << " agent " << i << " [";
                for (Eigen::Index k = 0; k < z.rows(); ++k) os << (k ? " " : "") << z(k, i);
                os << "]";
            }
            throw TrainingError(os.str());
        }
        return z;
    }

    std::vector<std::size_t> column_agents(std::size_t steps) const {
        std::vector<std::size_t> ids;
        ids.reserve(steps * n_agents());
        for (std::size_t t = 0; t < steps; ++t) ids.insert(ids.end(), ids_.begin(), ids_.end());
        return ids;
    }

    Matrix stack(const Segment& seg) const {
        if (seg.steps() == 0) throw UsageError("empty rollout segment");
        const auto N = static_cast<Eigen::Index>(n_agents());
        Matrix obs(static_cast<Eigen::Index>(actor_.observation_width()), static_cast<Eigen::Index>(seg.steps()) * N);
        for (std::size_t t = 0; t < seg.steps(); ++t) {
            if (seg.observations[t].cols() != N || seg.actions[t].size() != n_agents() || seg.rewards[t].size() != n_agents())
                throw UsageError("segment step " + std::to_string(t) + " is not aligned across agents");
            obs.middleCols(static_cast<Eigen::Index>(t) * N, N) = seg.observations[t];
        }
        return obs;
    }

    AdvantageResult advantages_from(const Segment& seg, const Matrix& value_row) const {
        const auto T = static_cast<Eigen::Index>(seg.steps()), N = static_cast<Eigen::Index>(n_agents());
        Matrix rewards(T, N), values(T, N);
        for (Eigen::Index t = 0; t < T; ++t)
            for (Eigen::Index i = 0; i < N; ++i) {
                rewards(t, i) = seg.rewards[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
                values(t, i) = value_row(0, t * N + i);
            }
        Vector boot = Vector::Zero(N);
        if (seg.bootstrap_observations.size() != 0 && !seg.terminal.back()) boot = values_of(seg.bootstrap_observations);
        return n_step_advantage(rewards, values, boot, seg.terminal, cfg_.gamma);
    }

    Vector values_of(const Matrix& obs) const { return critic_.forward(ids_, obs).output.row(0).transpose(); }

    LossResult compute(const Segment& seg, const AdvantageResult* frozen) const {
        const Matrix obs = stack(seg);
        const auto ids = column_agents(seg.steps());
        const auto T = static_cast<Eigen::Index>(seg.steps()), N = static_cast<Eigen::Index>(n_agents());
        const double inv_t = 1.0 / static_cast<double>(T);

        auto cr = critic_.forward(ids, obs);
        const AdvantageResult targets = frozen ? *frozen : advantages_from(seg, cr.output);
        auto ar = actor_.forward(ids, obs);
        const Matrix lp = log_softmax(checked(ar.output));
        const Matrix p = lp.array().exp();

        LossResult out;
        // Each root averages over the agents that share it, so the objective
        // is a sum of per-root means (a plain mean over agents unless grouped).
        const Vector actor_w = member_weights(actor_), critic_w = member_weights(critic_);
        Matrix d_logits = Matrix::Zero(lp.rows(), lp.cols());
        Matrix d_value(1, lp.cols());
        for (Eigen::Index t = 0; t < T; ++t)
            for (Eigen::Index i = 0; i < N; ++i) {
                const Eigen::Index c = t * N + i;
                const int a = seg.actions[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
                if (a < 0 || a >= lp.rows()) throw UsageError("action index out of range in segment");
                const double adv = targets.advantages(t, i);
                const double h = -(p.col(c).array() * lp.col(c).array()).sum();
                const double err = cr.output(0, c) - targets.returns(t, i);
                out.policy += -adv * lp(a, c);
                out.entropy += h;
                out.value += err * err;
                out.total += inv_t * (actor_w[i] * (-adv * lp(a, c) - cfg_.entropy_coef * h) +
                                      critic_w[i] * cfg_.value_coef * err * err);
                // d(-A log p_a)/dz = -A (e_a - p);  d(-beta H)/dz = beta p (log p + H)
                d_logits.col(c) = (cfg_.entropy_coef * p.col(c).array() * (lp.col(c).array() + h) +
                                   adv * p.col(c).array()).matrix();
                d_logits(a, c) -= adv;
                d_logits.col(c) *= inv_t;
                d_value(0, c) = 2.0 * cfg_.value_coef * err * inv_t;
            }
        const double cols = static_cast<double>(T * N);
        out.policy /= cols;
        out.entropy /= cols;
        out.value /= cols;
        if (!std::isfinite(out.total)) throw TrainingError("non-finite A2C loss");

        out.actor_grads = actor_.backward(ar.trace, d_logits);
        actor_.normalize(out.actor_grads);
        out.critic_grads = critic_.backward(cr.trace, d_value);
        critic_.normalize(out.critic_grads);
        return out;
    }

    Vector member_weights(const SharedAgentNetwork& net) const {
        Vector w(static_cast<Eigen::Index>(n_agents()));
        for (std::size_t i = 0; i < n_agents(); ++i)
            w[static_cast<Eigen::Index>(i)] = 1.0 / static_cast<double>(net.root_members(net.root_of(i)));
        return w;
    }

    static double step(netcore::Optimizer& opt, SharedAgentNetwork& net, std::vector<GradientStore>& grads) {
        std::vector<netcore::ParameterStore*> ps;
        std::vector<GradientStore*> gs;
        for (std::size_t r = 0; r < grads.size(); ++r) {
            ps.push_back(&net.roots()[r]);
            gs.push_back(&grads[r]);
        }
        return opt.step(ps, gs);
    }

    SharedAgentNetwork actor_;
    SharedAgentNetwork critic_;
    A2cConfig cfg_;
    netcore::Optimizer actor_opt_;
    netcore::Optimizer critic_opt_;
    std::vector<std::size_t> ids_;
};

struct EpisodeStats {
    double team_return = 0.0;
    std::vector<double> agent_returns;
    std::size_t length = 0;
};

/// Steps one environment with the current stochastic policy and cuts the
/// stream into segments of at most n steps that never cross an episode end.
class Collector {
public:
    Collector(envs::Environment& env, Seed explore_seed) : env_(env), rng_(explore_seed) {}

    Segment collect(const A2cTrainer& trainer, std::size_t n, std::vector<EpisodeStats>& finished) {
        if (!live_) begin();
        Segment seg;
        for (std::size_t k = 0; k < n; ++k) {
            const auto s = trainer.sample_actions(obs_, rng_);
            seg.observations.push_back(obs_);
            seg.actions.push_back(s.actions);
            const auto st = env_.step(s.actions);
            ++steps_;
            seg.rewards.push_back(st.rewards);
            seg.terminal.push_back(st.terminal);
            current_.team_return += st.team_reward;
            for (std::size_t i = 0; i < st.rewards.size(); ++i) current_.agent_returns[i] += st.rewards[i];
            ++current_.length;
            obs_ = st.observations;
            if (st.done) {
                if (!st.terminal) seg.bootstrap_observations = obs_;
                finished.push_back(current_);
                live_ = false;
                return seg;
            }
        }
        seg.bootstrap_observations = obs_;
        return seg;
    }

    std::size_t steps() const noexcept { return steps_; }

private:
    void begin() {
        obs_ = env_.reset().observations;
        current_ = {};
        current_.agent_returns.assign(env_.n_agents(), 0.0);
        live_ = true;
    }

    envs::Environment& env_;
    Rng rng_;
    Matrix obs_;
    EpisodeStats current_;
    bool live_ = false;
    std::size_t steps_ = 0;
};

/// Mean team return of greedy (mode) actions.
inline double evaluate_greedy(const A2cTrainer& trainer, envs::Environment& env, std::size_t episodes) {
    if (episodes == 0) return 0.0;
    double total = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
        Matrix obs = env.reset().observations;
        for (bool done = false; !done;) {
            const auto st = env.step(trainer.greedy_actions(obs));
            total += st.team_reward;
            obs = st.observations;
            done = st.done;
        }
    }
    return total / static_cast<double>(episodes);
}

}  // namespace snpps::maa2c
