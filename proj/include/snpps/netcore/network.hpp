#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snpps/errors.hpp"
#include "snpps/netcore/tensors.hpp"
#include "snpps/netcore/topology.hpp"

namespace snpps::netcore {

/// Recurrent hidden vector of a single sequence (empty for feed-forward nets).
struct RecurrentState {
    Vector hidden;

    static RecurrentState zeros(const NetworkTopology& topo) {
        return {Vector::Zero(static_cast<Eigen::Index>(topo.state_width()))};
    }
};

/// One 0/1 matrix (width x batch) per hidden vector. Column b masks sample b.
using HiddenMasks = std::vector<Matrix>;

struct LayerTrace {
    Matrix input;
    Matrix pre;     // dense pre-activation
    Matrix output;  // post-activation, post-mask
    // GRU internals
    Matrix h_prev, reset, update, candidate, recurrent_candidate;
};

/// Everything backward() needs from a forward pass.
struct ForwardTrace {
    std::vector<LayerTrace> layers;
    HiddenMasks masks;
    Eigen::Index batch = 0;

    bool empty() const noexcept { return layers.empty(); }
    /// Post-activation vector of hidden layer k (masked).
    const Matrix& hidden(std::size_t k) const { return layers.at(k).output; }
};

struct ForwardResult {
    Matrix output;
    Matrix state;  // new recurrent state (state_width x batch)
    ForwardTrace trace;
};

struct BackwardResult {
    Matrix d_input;
    Matrix d_state;  // gradient w.r.t. the recurrent state fed into forward()
};

namespace detail {

inline Matrix sigmoid(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

inline void apply_activation(Activation a, Matrix& m) {
    switch (a) {
        case Activation::identity: break;
        case Activation::relu: m = m.cwiseMax(0.0); break;
        case Activation::tanh: m = m.array().tanh().matrix(); break;
        case Activation::softmax:
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                auto col = m.col(c);
                col.array() -= col.maxCoeff();
                col = col.array().exp().matrix();
                col /= col.sum();
            }
            break;
    }
}

// Eigen's GEMM repacks the left operand on every call. With only a few
// columns that dominates, so narrow batches go column by column.
inline constexpr Eigen::Index kNarrowBatch = 4;

template <class Lhs>
Matrix product(const Lhs& a, const Matrix& b) {
    if (b.cols() > kNarrowBatch) return a * b;
    Matrix out(a.rows(), b.cols());
    for (Eigen::Index c = 0; c < b.cols(); ++c) out.col(c).noalias() = a * b.col(c);
    return out;
}

template <class Lhs>
void add_product(Matrix& out, const Lhs& a, const Matrix& b) {
    if (b.cols() > kNarrowBatch) {
        out.noalias() += a * b;
        return;
    }
    for (Eigen::Index c = 0; c < b.cols(); ++c) out.col(c).noalias() += a * b.col(c);
}

// g += d x^T
inline void add_outer(Matrix& g, const Matrix& d, const Matrix& x) {
    if (d.cols() > kNarrowBatch) {
        g.noalias() += d * x.transpose();
        return;
    }
    g.noalias() += d.lazyProduct(x.transpose());
}

inline void check_shape(const Matrix& m, std::size_t rows, Eigen::Index cols, const char* what) {
    if (static_cast<std::size_t>(m.rows()) != rows || m.cols() != cols)
        throw UsageError(std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

}  // namespace detail

/// Batched forward pass: columns of `input` are independent samples.
/// `state` may be empty (zero initial recurrent state). `masks`, when given,
/// zero hidden activations per column after the nonlinearity.
/// This overload takes the masks by value and keeps them in the trace without copying.
inline ForwardResult forward(const ParameterStore& params, const NetworkTopology& topo, const Matrix& input,
                             const Matrix& state, HiddenMasks&& owned_masks) {
    const HiddenMasks* masks = owned_masks.empty() ? nullptr : &owned_masks;  // empty means unmasked
    const Eigen::Index batch = input.cols();
    detail::check_shape(input, topo.input_width(), batch, "forward input");
    if (params.layers.size() != topo.layer_count()) throw UsageError("parameters do not match topology");
    const std::size_t sw = topo.state_width();
    Matrix h0 = state.size() == 0 ? Matrix::Zero(static_cast<Eigen::Index>(sw), batch) : state;
    detail::check_shape(h0, sw, batch, "forward state");
    if (masks) {
        if (masks->size() != topo.hidden_count()) throw UsageError("mask count does not match hidden layers");
        for (std::size_t k = 0; k < masks->size(); ++k)
            detail::check_shape((*masks)[k], topo.layer(k).output_width, batch, "hidden mask");
    }

    ForwardResult res;
    res.trace.batch = batch;
    res.trace.layers.resize(topo.layer_count());
    res.trace.masks = std::move(owned_masks);
    if (masks) masks = &res.trace.masks;
    res.state = Matrix(static_cast<Eigen::Index>(sw), batch);

    Matrix x = input;
    for (std::size_t k = 0; k < topo.layer_count(); ++k) {
        const auto& spec = topo.layer(k);
        const auto& p = params.layers[k];
        auto& tr = res.trace.layers[k];
        tr.input = x;
        const bool hidden = k + 1 < topo.layer_count();
        if (spec.kind == LayerKind::dense) {
            detail::check_shape(p.weight, spec.output_width, static_cast<Eigen::Index>(spec.input_width),
                                "dense weight");
            tr.pre = detail::product(p.weight, x);
            tr.pre.colwise() += p.bias;
            tr.output = tr.pre;
            detail::apply_activation(spec.activation, tr.output);
        } else {
            const auto H = static_cast<Eigen::Index>(spec.output_width);
            Matrix gi = detail::product(p.weight, x);
            gi.colwise() += p.bias;
            Matrix gh = detail::product(p.recurrent_weight, h0);
            gh.colwise() += p.recurrent_bias;
            tr.h_prev = h0;
            tr.reset = detail::sigmoid(gi.topRows(H) + gh.topRows(H));
            tr.update = detail::sigmoid(gi.middleRows(H, H) + gh.middleRows(H, H));
            tr.recurrent_candidate = gh.bottomRows(H);
            tr.candidate =
                (gi.bottomRows(H).array() + tr.reset.array() * tr.recurrent_candidate.array()).tanh().matrix();
            tr.output = ((1.0 - tr.update.array()) * tr.candidate.array() + tr.update.array() * h0.array()).matrix();
        }
        if (hidden && masks) tr.output.array() *= (*masks)[k].array();
        if (spec.kind == LayerKind::gru) res.state = tr.output;
        x = tr.output;
    }
    res.output = std::move(x);
    return res;
}

inline ForwardResult forward(const ParameterStore& params, const NetworkTopology& topo, const Matrix& input,
                             const Matrix& state = Matrix(), const HiddenMasks* masks = nullptr) {
    return forward(params, topo, input, state, masks ? HiddenMasks(*masks) : HiddenMasks{});
}

/// Accumulates parameter gradients of a scalar loss into `grads` given dL/d(output)
/// and, for recurrent nets, dL/d(new state). Returns input and incoming-state gradients.
inline BackwardResult backward_into(GradientStore& grads, const ParameterStore& params, const NetworkTopology& topo,
                                    const ForwardTrace& trace, const Matrix& d_output,
                                    const Matrix& d_state = Matrix()) {
    if (trace.empty() || trace.layers.size() != topo.layer_count())
        throw UsageError("backward called without a matching forward trace");
    if (!grads.matches(topo)) throw UsageError("gradient store does not match topology");
    const Eigen::Index batch = trace.batch;
    detail::check_shape(d_output, topo.output_width(), batch, "backward output gradient");
    const std::size_t sw = topo.state_width();
    if (d_state.size() != 0) detail::check_shape(d_state, sw, batch, "backward state gradient");

    BackwardResult res;
    res.d_state = Matrix::Zero(static_cast<Eigen::Index>(sw), batch);
    Matrix d = d_output;
    for (std::size_t kk = topo.layer_count(); kk-- > 0;) {
        const auto& spec = topo.layer(kk);
        const auto& p = params.layers[kk];
        const auto& tr = trace.layers[kk];
        auto& g = grads.layers[kk];
        const bool hidden = kk + 1 < topo.layer_count();
        if (spec.kind == LayerKind::gru && d_state.size() != 0) d += d_state;
        if (hidden && !trace.masks.empty()) d.array() *= trace.masks[kk].array();

        if (spec.kind == LayerKind::dense) {
            Matrix d_pre;
            switch (spec.activation) {
                case Activation::identity: d_pre = d; break;
                case Activation::relu: d_pre = (tr.pre.array() > 0.0).select(d, 0.0); break;
                case Activation::tanh: d_pre = (d.array() * (1.0 - tr.output.array().square())).matrix(); break;
                case Activation::softmax: {
                    const Eigen::RowVectorXd dot = (d.array() * tr.output.array()).colwise().sum();
                    d_pre = (tr.output.array() * (d.rowwise() - dot).array()).matrix();
                    break;
                }
            }
            detail::add_outer(g.weight, d_pre, tr.input);
            g.bias += d_pre.rowwise().sum();
            d = detail::product(p.weight.transpose(), d_pre);
        } else {
            const auto H = static_cast<Eigen::Index>(spec.output_width);
            const auto& z = tr.update.array();
            const auto& r = tr.reset.array();
            const auto& n = tr.candidate.array();
            const Matrix dz = (d.array() * (tr.h_prev.array() - n)).matrix();
            const Matrix dn_pre = (d.array() * (1.0 - z) * (1.0 - n.square())).matrix();
            Matrix dh = (d.array() * z).matrix();
            const Matrix dr_pre = (dn_pre.array() * tr.recurrent_candidate.array() * r * (1.0 - r)).matrix();
            const Matrix dz_pre = (dz.array() * z * (1.0 - z)).matrix();

            Matrix d_gi(3 * H, batch), d_gh(3 * H, batch);
            d_gi << dr_pre, dz_pre, dn_pre;
            d_gh << dr_pre, dz_pre, (dn_pre.array() * r).matrix();
            detail::add_outer(g.weight, d_gi, tr.input);
            g.bias += d_gi.rowwise().sum();
            detail::add_outer(g.recurrent_weight, d_gh, tr.h_prev);
            g.recurrent_bias += d_gh.rowwise().sum();
            detail::add_product(dh, p.recurrent_weight.transpose(), d_gh);
            res.d_state = std::move(dh);
            d = detail::product(p.weight.transpose(), d_gi);
        }
    }
    grads.count += static_cast<std::size_t>(batch);
    res.d_input = std::move(d);
    return res;
}

inline GradientStore backward(const ParameterStore& params, const NetworkTopology& topo, const ForwardTrace& trace,
                              const Matrix& d_output, const Matrix& d_state = Matrix()) {
    auto g = GradientStore::zeros_like(params);
    backward_into(g, params, topo, trace, d_output, d_state);
    return g;
}

/// Single-sample convenience wrapper.
struct SampleResult {
    Vector output;
    RecurrentState state;
    std::vector<Vector> activations;  // post-activation vector of every layer
    ForwardTrace trace;
};

inline SampleResult forward(const ParameterStore& params, const NetworkTopology& topo, const Vector& input,
                            const RecurrentState& state = {}) {
    Matrix h = state.hidden.size() == 0 ? Matrix() : Matrix(state.hidden);
    auto r = forward(params, topo, Matrix(input), h);
    SampleResult out;
    out.output = r.output.col(0);
    out.state.hidden = r.state.col(0);
    for (const auto& l : r.trace.layers) out.activations.push_back(l.output.col(0));
    out.trace = std::move(r.trace);
    return out;
}

}  // namespace snpps::netcore
