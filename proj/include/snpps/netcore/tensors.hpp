#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "snpps/errors.hpp"
#include "snpps/netcore/topology.hpp"
#include "snpps/rng.hpp"

namespace snpps::netcore {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tensors of one layer. Dense layers use `weight` (out x in) and `bias` (out).
/// GRU layers stack the reset, update and candidate gates in that order:
/// `weight` (3H x in), `recurrent_weight` (3H x H), `bias` and `recurrent_bias` (3H).
struct LayerTensors {
    Matrix weight;
    Vector bias;
    Matrix recurrent_weight;
    Vector recurrent_bias;

    std::size_t size() const {
        return static_cast<std::size_t>(weight.size() + bias.size() + recurrent_weight.size() +
                                        recurrent_bias.size());
    }

    bool operator==(const LayerTensors& o) const {
        auto eq = [](const auto& a, const auto& b) {
            return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
        };
        return eq(weight, o.weight) && eq(bias, o.bias) && eq(recurrent_weight, o.recurrent_weight) &&
               eq(recurrent_bias, o.recurrent_bias);
    }
};

/// Calls f(tensor_a, tensor_b) for each of the four tensors as flat vector maps.
template <class A, class B, class F>
void zip_tensors(A& a, B& b, F&& f) {
    auto flat = [](auto& m) {
        using Scalar = std::remove_reference_t<decltype(*m.data())>;
        using Map = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const Vector, Vector>>;
        return Map(m.data(), m.size());
    };
    f(flat(a.weight), flat(b.weight));
    f(flat(a.bias), flat(b.bias));
    f(flat(a.recurrent_weight), flat(b.recurrent_weight));
    f(flat(a.recurrent_bias), flat(b.recurrent_bias));
}

template <class A, class F>
void for_each_tensor(A& a, F&& f) {
    zip_tensors(a, a, [&](auto x, auto) { f(x); });
}

/// Per-layer tensors shaped after a topology.
struct TensorSet {
    std::vector<LayerTensors> layers;

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.size();
        return n;
    }

    bool same_shape(const TensorSet& o) const {
        if (layers.size() != o.layers.size()) return false;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const auto& a = layers[k];
            const auto& b = o.layers[k];
            if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
                a.bias.size() != b.bias.size() || a.recurrent_weight.rows() != b.recurrent_weight.rows() ||
                a.recurrent_weight.cols() != b.recurrent_weight.cols() ||
                a.recurrent_bias.size() != b.recurrent_bias.size())
                return false;
        }
        return true;
    }

    bool matches(const NetworkTopology& topo) const {
        if (layers.size() != topo.layer_count()) return false;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const auto& spec = topo.layer(k);
            const auto& l = layers[k];
            const auto in = static_cast<Eigen::Index>(spec.input_width);
            const auto out = static_cast<Eigen::Index>(spec.output_width);
            const bool gru = spec.kind == LayerKind::gru;
            const auto rows = gru ? 3 * out : out;
            if (l.weight.rows() != rows || l.weight.cols() != in || l.bias.size() != rows) return false;
            if (l.recurrent_weight.rows() != (gru ? rows : 0) || l.recurrent_weight.cols() != (gru ? out : 0) ||
                l.recurrent_bias.size() != (gru ? rows : 0))
                return false;
        }
        return true;
    }

    bool all_finite() const {
        bool ok = true;
        for (const auto& l : layers) for_each_tensor(l, [&](auto v) { ok = ok && v.allFinite(); });
        return ok;
    }

    void set_zero() {
        for (auto& l : layers) for_each_tensor(l, [](auto v) { v.setZero(); });
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& l : layers) for_each_tensor(l, [&](auto v) { s += v.squaredNorm(); });
        return s;
    }

    /// this += alpha * other
    void add_scaled(const TensorSet& other, double alpha = 1.0) {
        if (!same_shape(other)) throw UsageError("tensor shape mismatch in add_scaled");
        for (std::size_t k = 0; k < layers.size(); ++k)
            zip_tensors(layers[k], other.layers[k], [&](auto a, auto b) { a += alpha * b; });
    }

    void scale(double alpha) {
        for (auto& l : layers) for_each_tensor(l, [&](auto v) { v *= alpha; });
    }

    /// Elementwise product with a same-shaped mask.
    void multiply(const TensorSet& mask) {
        if (!same_shape(mask)) throw UsageError("tensor shape mismatch in multiply");
        for (std::size_t k = 0; k < layers.size(); ++k)
            zip_tensors(layers[k], mask.layers[k], [](auto a, auto b) { a.array() *= b.array(); });
    }

    /// Flat copy in layer order (weight, bias, recurrent_weight, recurrent_bias; column-major).
    Vector flatten() const {
        Vector out(static_cast<Eigen::Index>(size()));
        Eigen::Index at = 0;
        for (const auto& l : layers)
            for_each_tensor(l, [&](auto v) {
                out.segment(at, v.size()) = v;
                at += v.size();
            });
        return out;
    }

    void unflatten(const Vector& flat) {
        if (static_cast<std::size_t>(flat.size()) != size()) throw UsageError("flat size mismatch");
        Eigen::Index at = 0;
        for (auto& l : layers)
            for_each_tensor(l, [&](auto v) {
                v = flat.segment(at, v.size());
                at += v.size();
            });
    }

    static TensorSet zeros(const NetworkTopology& topo) {
        TensorSet t;
        for (const auto& spec : topo.layers()) {
            const auto in = static_cast<Eigen::Index>(spec.input_width);
            const auto out = static_cast<Eigen::Index>(spec.output_width);
            LayerTensors l;
            if (spec.kind == LayerKind::dense) {
                l.weight = Matrix::Zero(out, in);
                l.bias = Vector::Zero(out);
                l.recurrent_weight = Matrix(0, 0);
                l.recurrent_bias = Vector(0);
            } else {
                l.weight = Matrix::Zero(3 * out, in);
                l.bias = Vector::Zero(3 * out);
                l.recurrent_weight = Matrix::Zero(3 * out, out);
                l.recurrent_bias = Vector::Zero(3 * out);
            }
            t.layers.push_back(std::move(l));
        }
        return t;
    }

    static TensorSet zeros_from(const TensorSet& shape) {
        TensorSet t = shape;
        t.set_zero();
        return t;
    }

    static TensorSet ones(const NetworkTopology& topo) {
        auto t = zeros(topo);
        for (auto& l : t.layers) for_each_tensor(l, [](auto v) { v.setOnes(); });
        return t;
    }

    bool operator==(const TensorSet&) const = default;
};

/// The trainable parameters of one network.
struct ParameterStore : TensorSet {
    ParameterStore() = default;
    explicit ParameterStore(TensorSet t) : TensorSet(std::move(t)) {}
};

/// Gradients shaped like a ParameterStore, plus how many contributions were summed in.
struct GradientStore : TensorSet {
    std::size_t count = 0;

    GradientStore() = default;
    explicit GradientStore(TensorSet t, std::size_t n = 0) : TensorSet(std::move(t)), count(n) {}

    static GradientStore zeros_like(const TensorSet& shape) {
        GradientStore g{shape};
        g.set_zero();
        return g;
    }
};

/// Uniform(-b, b) weights with b = sqrt(3 / fan_in) (standard deviation 1/sqrt(fan_in)), zero biases.
inline ParameterStore init_parameters(const NetworkTopology& topo, Seed seed) {
    ParameterStore p{TensorSet::zeros(topo)};
    Rng rng(seed);
    auto fill = [&](Matrix& w, std::size_t fan_in) {
        const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
        // Row-major draw order keeps the stream layout independent of Eigen storage order.
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
    };
    for (std::size_t k = 0; k < topo.layer_count(); ++k) {
        const auto& spec = topo.layer(k);
        fill(p.layers[k].weight, spec.input_width);
        if (spec.kind == LayerKind::gru) fill(p.layers[k].recurrent_weight, spec.output_width);
    }
    return p;
}

}  // namespace snpps::netcore
