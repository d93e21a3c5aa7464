#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "snpps/errors.hpp"
#include "snpps/netcore/tensors.hpp"

namespace snpps::netcore {

enum class OptimizerKind { rmsprop, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::rmsprop;
    double learning_rate = 5e-4;
    double decay = 0.99;
    double epsilon = 1e-5;
    /// Global gradient-norm clip; <= 0 disables clipping.
    double clip_norm = 10.0;
};

/// Running second moments for RMSProp (unused by SGD).
struct OptimizerState {
    TensorSet square_avg;
};

/// Scales gradients in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_global_norm(std::span<GradientStore* const> grads, double max_norm) {
    double sq = 0.0;
    for (const auto* g : grads) sq += g->squared_norm();
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm");
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / (norm + 1e-6);
        for (auto* g : grads) g->scale(s);
    }
    return norm;
}

namespace detail {

// Applies grads * scale.
inline void update_scaled(ParameterStore& params, const GradientStore& grads, OptimizerState& state,
                          const OptimizerConfig& cfg, double scale) {
    if (cfg.kind == OptimizerKind::sgd) {
        params.add_scaled(grads, -cfg.learning_rate * scale);
        return;
    }
    if (!state.square_avg.same_shape(params)) state.square_avg = TensorSet::zeros_from(params);
    const double lr = cfg.learning_rate, decay = cfg.decay, eps = cfg.epsilon;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        auto& p = params.layers[k];
        auto& v = state.square_avg.layers[k];
        const auto& gl = grads.layers[k];
        auto upd = [&](auto& pt, auto& vt, const auto& graw) {
            const auto gt = graw.array() * scale;
            vt.array() = decay * vt.array() + (1.0 - decay) * gt.square();
            pt.array() -= lr * gt / (vt.array().sqrt() + eps);
        };
        upd(p.weight, v.weight, gl.weight);
        upd(p.bias, v.bias, gl.bias);
        upd(p.recurrent_weight, v.recurrent_weight, gl.recurrent_weight);
        upd(p.recurrent_bias, v.recurrent_bias, gl.recurrent_bias);
    }
}

inline double clip_scale(double norm, double max_norm) {
    return max_norm > 0.0 && norm > max_norm ? max_norm / (norm + 1e-6) : 1.0;
}

}  // namespace detail

/// One optimizer step on a single store, clipped on its own norm.
inline void apply_update(ParameterStore& params, const GradientStore& grads, OptimizerState& state,
                         const OptimizerConfig& cfg) {
    if (!params.same_shape(grads)) throw UsageError("gradient shape does not match parameters");
    const double norm = std::sqrt(grads.squared_norm());
    if (!std::isfinite(norm)) throw TrainingError("non-finite gradient passed to optimizer");
    detail::update_scaled(params, grads, state, cfg, detail::clip_scale(norm, cfg.clip_norm));
}

/// Optimizer over a fixed list of parameter stores with joint gradient clipping.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

    const OptimizerConfig& config() const noexcept { return cfg_; }

    /// Returns the pre-clip gradient norm.
    double step(std::span<ParameterStore* const> params, std::span<GradientStore* const> grads) {
        if (params.size() != grads.size()) throw UsageError("optimizer: params/grads count mismatch");
        double sq = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params[i]->same_shape(*grads[i])) throw UsageError("gradient shape does not match parameters");
            sq += grads[i]->squared_norm();
        }
        const double norm = std::sqrt(sq);
        if (!std::isfinite(norm)) throw TrainingError("non-finite gradient passed to optimizer");
        if (states_.size() < params.size()) states_.resize(params.size());
        const double scale = detail::clip_scale(norm, cfg_.clip_norm);
        for (std::size_t i = 0; i < params.size(); ++i) detail::update_scaled(*params[i], *grads[i], states_[i], cfg_, scale);
        return norm;
    }

private:
    OptimizerConfig cfg_;
    std::vector<OptimizerState> states_;
};

}  // namespace snpps::netcore
