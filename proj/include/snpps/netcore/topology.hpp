#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "snpps/errors.hpp"
#include "snpps/rng.hpp"

namespace snpps::netcore {

enum class LayerKind { dense, gru };
enum class Activation { identity, relu, tanh, softmax };

inline std::string_view to_string(LayerKind k) { return k == LayerKind::dense ? "dense" : "gru"; }

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::softmax: return "softmax";
    }
    return "identity";
}

inline LayerKind parse_layer_kind(std::string_view s) {
    if (s == "dense") return LayerKind::dense;
    if (s == "gru") return LayerKind::gru;
    throw UsageError("unknown layer kind '" + std::string(s) + "'");
}

inline Activation parse_activation(std::string_view s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "softmax") return Activation::softmax;
    throw UsageError("unknown activation '" + std::string(s) + "'");
}

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t input_width = 0;
    std::size_t output_width = 0;
    Activation activation = Activation::identity;

    bool operator==(const LayerSpec&) const = default;
};

/// Ordered chain of layers. Every layer output except the last is a "hidden
/// vector"; pruning schedules and feature dumps are indexed by hidden vector.
class NetworkTopology {
public:
    NetworkTopology() = default;

    explicit NetworkTopology(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
        if (layers_.empty()) throw UsageError("topology needs at least one layer");
        std::size_t grus = 0;
        for (std::size_t k = 0; k < layers_.size(); ++k) {
            const auto& l = layers_[k];
            if (l.input_width == 0 || l.output_width == 0)
                throw UsageError("layer " + std::to_string(k) + " has zero width");
            if (k + 1 < layers_.size() && l.output_width != layers_[k + 1].input_width)
                throw UsageError("layer widths do not chain at layer " + std::to_string(k));
            if (l.kind == LayerKind::gru) {
                ++grus;
                if (l.activation != Activation::identity)
                    throw UsageError("gru layer must use identity activation");
            }
            if (l.activation == Activation::softmax && k + 1 != layers_.size())
                throw UsageError("softmax is only allowed on the output layer");
        }
        if (grus > 1) throw UsageError("at most one gru layer is supported");
    }

    /// Fully connected stack: input -> hidden... -> output.
    static NetworkTopology mlp(std::size_t input, const std::vector<std::size_t>& hidden, std::size_t output,
                               Activation hidden_act = Activation::relu,
                               Activation output_act = Activation::identity) {
        std::vector<LayerSpec> layers;
        std::size_t prev = input;
        for (auto h : hidden) {
            layers.push_back({LayerKind::dense, prev, h, hidden_act});
            prev = h;
        }
        layers.push_back({LayerKind::dense, prev, output, output_act});
        return NetworkTopology(std::move(layers));
    }

    /// dense(relu) -> gru -> dense, the recurrent utility layout.
    static NetworkTopology recurrent(std::size_t input, std::size_t pre_width, std::size_t gru_width,
                                     std::size_t output) {
        return NetworkTopology({{LayerKind::dense, input, pre_width, Activation::relu},
                                {LayerKind::gru, pre_width, gru_width, Activation::identity},
                                {LayerKind::dense, gru_width, output, Activation::identity}});
    }

    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    std::size_t layer_count() const noexcept { return layers_.size(); }
    const LayerSpec& layer(std::size_t k) const { return layers_.at(k); }
    std::size_t input_width() const { return layers_.front().input_width; }
    std::size_t output_width() const { return layers_.back().output_width; }
    std::size_t hidden_count() const noexcept { return layers_.empty() ? 0 : layers_.size() - 1; }

    std::vector<std::size_t> hidden_widths() const {
        std::vector<std::size_t> w;
        for (std::size_t k = 0; k + 1 < layers_.size(); ++k) w.push_back(layers_[k].output_width);
        return w;
    }

    std::optional<std::size_t> gru_index() const {
        for (std::size_t k = 0; k < layers_.size(); ++k)
            if (layers_[k].kind == LayerKind::gru) return k;
        return std::nullopt;
    }

    std::size_t state_width() const {
        auto g = gru_index();
        return g ? layers_[*g].output_width : 0;
    }

    /// Same topology with the first layer widened by `extra` inputs.
    NetworkTopology with_extra_inputs(std::size_t extra) const {
        auto layers = layers_;
        layers.front().input_width += extra;
        return NetworkTopology(std::move(layers));
    }

    std::string canonical() const {
        std::string s;
        for (const auto& l : layers_) {
            s += std::string(to_string(l.kind)) + ":" + std::to_string(l.input_width) + "x" +
                 std::to_string(l.output_width) + ":" + std::string(to_string(l.activation)) + ";";
        }
        return s;
    }

    std::uint64_t hash() const { return detail::fnv1a(canonical()); }

    bool operator==(const NetworkTopology&) const = default;

private:
    std::vector<LayerSpec> layers_;
};

}  // namespace snpps::netcore
