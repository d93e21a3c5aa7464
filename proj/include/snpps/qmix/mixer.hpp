#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "snpps/errors.hpp"
#include "snpps/netcore/network.hpp"
#include "snpps/netcore/tensors.hpp"
#include "snpps/netcore/topology.hpp"
#include "snpps/rng.hpp"

namespace snpps::qmix {

using netcore::GradientStore;
using netcore::Matrix;
using netcore::NetworkTopology;
using netcore::ParameterStore;
using netcore::Vector;

struct MixerConfig {
    std::size_t embed_width = 32;  // mixer hidden width
    std::size_t hyper_width = 64;  // hidden width of the weight hypernetworks

    void validate() const {
        if (embed_width < 1) throw ConfigError("qmix.mixer.embed_width", "must be >= 1");
        if (hyper_width < 1) throw ConfigError("qmix.mixer.hyper_width", "must be >= 1");
    }
};

/// Hypernetworks of the mixer, indexed by MixerPart.
enum MixerPart : std::size_t { kHyperW1 = 0, kHyperB1 = 1, kHyperW2 = 2, kHyperV = 3 };
inline constexpr std::size_t kMixerParts = 4;

using MixerParams = std::array<ParameterStore, kMixerParts>;
using MixerGrads = std::array<GradientStore, kMixerParts>;

struct MixerTrace {
    Matrix q;        // N x B
    Matrix w1_raw;   // (N*E) x B, agent-major: entry i*E + e
    Matrix w2_raw;   // E x B
    Matrix pre;      // E x B
    Matrix hidden;   // E x B, elu(pre)
    std::array<netcore::ForwardTrace, kMixerParts> hyper;
};

struct MixerBackward {
    MixerGrads grads;
    Matrix d_q;  // N x B
};

/// Monotonic two-layer mixer whose weights come from state-conditioned
/// hypernetworks:
///   h   = elu(|W1(s)| q + b1(s))
///   Qjt = |w2(s)|^T h + V(s)
class MixingNetwork {
public:
    MixingNetwork() = default;

    MixingNetwork(std::size_t n_agents, std::size_t state_width, MixerConfig cfg, Seed seed)
        : n_(n_agents), state_width_(state_width), cfg_(cfg) {
        cfg_.validate();
        if (n_ < 1) throw UsageError("mixer needs at least one agent");
        if (state_width_ < 1) throw UsageError("mixer needs a non-empty state");
        const auto E = cfg_.embed_width, H = cfg_.hyper_width;
        topo_[kHyperW1] = NetworkTopology::mlp(state_width_, {H}, n_ * E);
        topo_[kHyperB1] = NetworkTopology::mlp(state_width_, {}, E);
        topo_[kHyperW2] = NetworkTopology::mlp(state_width_, {H}, E);
        topo_[kHyperV] = NetworkTopology::mlp(state_width_, {E}, 1);
        static constexpr const char* names[] = {"hyper_w1", "hyper_b1", "hyper_w2", "hyper_v"};
        for (std::size_t k = 0; k < kMixerParts; ++k)
            params_[k] = netcore::init_parameters(topo_[k], derive_seed(seed, names[k]));
    }

    std::size_t n_agents() const noexcept { return n_; }
    std::size_t state_width() const noexcept { return state_width_; }
    const MixerConfig& config() const noexcept { return cfg_; }
    const NetworkTopology& topology(std::size_t part) const { return topo_.at(part); }
    MixerParams& params() noexcept { return params_; }
    const MixerParams& params() const noexcept { return params_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.size();
        return n;
    }

    /// Column b of `states` (S x B) and `q` (N x B) is one joint evaluation.
    Vector mix(const Matrix& states, const Matrix& q, MixerTrace* trace = nullptr) const {
        check(states, q);
        const auto E = static_cast<Eigen::Index>(cfg_.embed_width), N = static_cast<Eigen::Index>(n_);
        const Eigen::Index B = q.cols();
        auto w1 = netcore::forward(params_[kHyperW1], topo_[kHyperW1], states);
        auto b1 = netcore::forward(params_[kHyperB1], topo_[kHyperB1], states);
        auto w2 = netcore::forward(params_[kHyperW2], topo_[kHyperW2], states);
        auto v = netcore::forward(params_[kHyperV], topo_[kHyperV], states);

        Matrix pre = b1.output;
        for (Eigen::Index b = 0; b < B; ++b)
            for (Eigen::Index i = 0; i < N; ++i)
                pre.col(b) += w1.output.col(b).segment(i * E, E).cwiseAbs() * q(i, b);
        const Matrix hidden = pre.unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
        Vector out = (w2.output.cwiseAbs().cwiseProduct(hidden)).colwise().sum().transpose() +
                     v.output.row(0).transpose();

        if (trace) {
            trace->q = q;
            trace->w1_raw = std::move(w1.output);
            trace->w2_raw = std::move(w2.output);
            trace->pre = std::move(pre);
            trace->hidden = hidden;
            trace->hyper = {std::move(w1.trace), std::move(b1.trace), std::move(w2.trace), std::move(v.trace)};
        }
        return out;
    }

    /// Gradients of a scalar loss given dL/dQjt per column.
    MixerBackward backward(const MixerTrace& tr, const Vector& d_out) const {
        const auto E = static_cast<Eigen::Index>(cfg_.embed_width), N = static_cast<Eigen::Index>(n_);
        const Eigen::Index B = tr.q.cols();
        if (d_out.size() != B) throw UsageError("mixer output gradient size mismatch");
        const Eigen::RowVectorXd dq_row = d_out.transpose();

        // sign(0) = 0 picks the zero subgradient of |x| at the kink
        auto sgn = [](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); };
        const Matrix d_w2 = (tr.hidden.array().rowwise() * dq_row.array() * tr.w2_raw.unaryExpr(sgn).array()).matrix();
        const Matrix d_hidden = (tr.w2_raw.cwiseAbs().array().rowwise() * dq_row.array()).matrix();
        const Matrix d_pre =
            (d_hidden.array() * tr.pre.array().unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); })).matrix();

        Matrix d_w1(N * E, B);
        MixerBackward res;
        res.d_q.resize(N, B);
        for (Eigen::Index b = 0; b < B; ++b)
            for (Eigen::Index i = 0; i < N; ++i) {
                const auto raw = tr.w1_raw.col(b).segment(i * E, E);
                d_w1.col(b).segment(i * E, E) = d_pre.col(b).cwiseProduct(raw.unaryExpr(sgn)) * tr.q(i, b);
                res.d_q(i, b) = raw.cwiseAbs().dot(d_pre.col(b));
            }

        const std::array<Matrix, kMixerParts> d_parts = {d_w1, d_pre, d_w2, Matrix(dq_row)};
        for (std::size_t k = 0; k < kMixerParts; ++k)
            res.grads[k] = netcore::backward(params_[k], topo_[k], tr.hyper[k], d_parts[k]);
        return res;
    }

    MixerGrads zero_gradients() const {
        MixerGrads g;
        for (std::size_t k = 0; k < kMixerParts; ++k) g[k] = GradientStore::zeros_like(params_[k]);
        return g;
    }

    bool operator==(const MixingNetwork& o) const {
        return n_ == o.n_ && state_width_ == o.state_width_ && params_ == o.params_;
    }

private:
    void check(const Matrix& states, const Matrix& q) const {
        if (static_cast<std::size_t>(q.rows()) != n_) throw UsageError("mixer expects one Q value per agent");
        if (static_cast<std::size_t>(states.rows()) != state_width_) throw UsageError("mixer state width mismatch");
        if (states.cols() != q.cols()) throw UsageError("mixer states and Q values disagree on batch size");
    }

    std::size_t n_ = 0;
    std::size_t state_width_ = 0;
    MixerConfig cfg_;
    std::array<NetworkTopology, kMixerParts> topo_;
    MixerParams params_;
};

}  // namespace snpps::qmix
