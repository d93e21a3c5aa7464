#pragma once

// Straightforward scalar re-implementation of the network forward pass, used
// as an oracle for the Eigen-based batched code path.

#include <cmath>
#include <vector>

#include "snpps/netcore/tensors.hpp"
#include "snpps/netcore/topology.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec act(snpps::netcore::Activation a, Vec v) {
    using snpps::netcore::Activation;
    if (a == Activation::relu)
        for (auto& x : v) x = x > 0 ? x : 0.0;
    if (a == Activation::tanh)
        for (auto& x : v) x = std::tanh(x);
    if (a == Activation::softmax) {
        double m = v[0];
        for (auto x : v) m = std::max(m, x);
        double s = 0.0;
        for (auto& x : v) s += (x = std::exp(x - m));
        for (auto& x : v) x /= s;
    }
    return v;
}

struct NaiveOut {
    Vec output;
    Vec state;
    std::vector<Vec> hidden;
};

/// masks: optional per-hidden-layer 0/1 vectors.
inline NaiveOut naive_forward(const snpps::netcore::ParameterStore& p, const snpps::netcore::NetworkTopology& topo,
                              Vec x, Vec h = {}, const std::vector<Vec>* masks = nullptr) {
    NaiveOut out;
    if (h.empty()) h.assign(topo.state_width(), 0.0);
    for (std::size_t k = 0; k < topo.layer_count(); ++k) {
        const auto& s = topo.layer(k);
        const auto& l = p.layers[k];
        const std::size_t in = s.input_width, w = s.output_width;
        Vec y(w);
        if (s.kind == snpps::netcore::LayerKind::dense) {
            for (std::size_t o = 0; o < w; ++o) {
                double acc = l.bias[o];
                for (std::size_t i = 0; i < in; ++i) acc += l.weight(o, i) * x[i];
                y[o] = acc;
            }
            y = act(s.activation, y);
        } else {
            auto gate = [&](std::size_t g, std::size_t o, bool with_h) {
                double a = l.bias[g * w + o];
                for (std::size_t i = 0; i < in; ++i) a += l.weight(g * w + o, i) * x[i];
                double b = l.recurrent_bias[g * w + o];
                for (std::size_t i = 0; i < w; ++i) b += l.recurrent_weight(g * w + o, i) * h[i];
                return std::pair{a, with_h ? b : 0.0};
            };
            for (std::size_t o = 0; o < w; ++o) {
                auto [ra, rb] = gate(0, o, true);
                auto [za, zb] = gate(1, o, true);
                auto [na, nb] = gate(2, o, true);
                const double r = sigm(ra + rb), z = sigm(za + zb);
                const double n = std::tanh(na + r * nb);
                y[o] = (1 - z) * n + z * h[o];
            }
        }
        if (masks && k + 1 < topo.layer_count())
            for (std::size_t o = 0; o < w; ++o) y[o] *= (*masks)[k][o];
        if (s.kind == snpps::netcore::LayerKind::gru) out.state = y;
        if (k + 1 < topo.layer_count()) out.hidden.push_back(y);
        x = y;
    }
    out.output = x;
    return out;
}

}  // namespace oracle
