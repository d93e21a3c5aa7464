#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "snpps/errors.hpp"
#include "snpps/netcore/tensors.hpp"
#include "snpps/netcore/topology.hpp"
#include "snpps/pruning/schedule.hpp"
#include "snpps/rng.hpp"

namespace snpps::pruning {

/// Per-hidden-vector keep flags (1 = kept, 0 = pruned).
struct NeuronMask {
    std::vector<std::vector<std::uint8_t>> layers;

    std::size_t kept(std::size_t k) const {
        return static_cast<std::size_t>(std::accumulate(layers.at(k).begin(), layers.at(k).end(), std::size_t{0}));
    }
    std::size_t pruned(std::size_t k) const { return layers.at(k).size() - kept(k); }

    netcore::Vector as_vector(std::size_t k) const {
        const auto& l = layers.at(k);
        netcore::Vector v(static_cast<Eigen::Index>(l.size()));
        for (std::size_t j = 0; j < l.size(); ++j) v[static_cast<Eigen::Index>(j)] = l[j] ? 1.0 : 0.0;
        return v;
    }

    static NeuronMask all_ones(const netcore::NetworkTopology& topo) {
        NeuronMask m;
        for (auto w : topo.hidden_widths()) m.layers.emplace_back(w, std::uint8_t{1});
        return m;
    }

    bool operator==(const NeuronMask&) const = default;
};

/// One structured mask per agent, all drawn under the same schedule.
struct NeuronMaskGroup {
    std::vector<NeuronMask> masks;
    PruningSchedule schedule;
    Seed seed = 0;
    std::uint64_t topology_hash = 0;

    std::size_t size() const noexcept { return masks.size(); }
    const NeuronMask& operator[](std::size_t i) const { return masks.at(i); }
    bool operator==(const NeuronMaskGroup&) const = default;
};

/// Weight-level 0/1 mask shaped like the network's ParameterStore.
struct WeightMask : netcore::TensorSet {
    WeightMask() = default;
    explicit WeightMask(netcore::TensorSet t) : netcore::TensorSet(std::move(t)) {}

    std::size_t zeros() const {
        std::size_t n = 0;
        for (const auto& l : layers)
            netcore::for_each_tensor(l, [&](auto v) { n += static_cast<std::size_t>((v.array() == 0.0).count()); });
        return n;
    }
};

/// Per-agent unstructured weight masks.
struct WeightMaskGroup {
    std::vector<WeightMask> masks;
    PruningSchedule schedule;
    Seed seed = 0;
    std::uint64_t topology_hash = 0;

    std::size_t size() const noexcept { return masks.size(); }
    const WeightMask& operator[](std::size_t i) const { return masks.at(i); }
};

namespace detail {

/// `count` distinct positions drawn uniformly from [0, n) (partial Fisher-Yates).
inline std::vector<std::size_t> sample_positions(std::size_t n, std::size_t count, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
    idx.resize(count);
    return idx;
}

inline NeuronMask draw_neuron_mask(const std::vector<std::size_t>& widths, const PruningSchedule& schedule,
                                   Rng& rng) {
    NeuronMask m;
    for (std::size_t k = 0; k < widths.size(); ++k) {
        std::vector<std::uint8_t> keep(widths[k], 1);
        for (auto j : sample_positions(widths[k], prune_count(schedule.ratio(k), widths[k]), rng)) keep[j] = 0;
        m.layers.push_back(std::move(keep));
    }
    return m;
}

inline void check_request(const netcore::NetworkTopology& topo, const PruningSchedule& schedule,
                          std::size_t n_agents) {
    if (n_agents == 0) throw UsageError("mask generation needs at least one agent");
    schedule.validate(topo);
}

}  // namespace detail

/// Structured tickets: agent i's mask is drawn from its own RNG substream,
/// pruning exactly floor(ratio * width) neurons per hidden vector.
inline NeuronMaskGroup generate_group_tickets(const netcore::NetworkTopology& topo, const PruningSchedule& schedule,
                                              std::size_t n_agents, Seed seed) {
    detail::check_request(topo, schedule, n_agents);
    NeuronMaskGroup g{{}, schedule, seed, topo.hash()};
    const auto widths = topo.hidden_widths();
    for (std::size_t i = 0; i < n_agents; ++i) {
        Rng rng(derive_seed(seed, "agent-mask", i));
        g.masks.push_back(detail::draw_neuron_mask(widths, schedule, rng));
    }
    return g;
}

/// One structured mask replicated for every agent.
inline NeuronMaskGroup generate_single_ticket(const netcore::NetworkTopology& topo, const PruningSchedule& schedule,
                                              std::size_t n_agents, Seed seed) {
    detail::check_request(topo, schedule, n_agents);
    Rng rng(derive_seed(seed, "agent-mask", 0));
    const auto m = detail::draw_neuron_mask(topo.hidden_widths(), schedule, rng);
    return {std::vector<NeuronMask>(n_agents, m), schedule, seed, topo.hash()};
}

/// Unstructured per-weight masks: for each layer producing hidden vector k,
/// floor(ratio_k * weight_count) individual weights are zeroed. Biases and the
/// output layer are untouched.
inline WeightMaskGroup generate_unstructured_masks(const netcore::NetworkTopology& topo,
                                                   const PruningSchedule& schedule, std::size_t n_agents, Seed seed) {
    detail::check_request(topo, schedule, n_agents);
    WeightMaskGroup g{{}, schedule, seed, topo.hash()};
    for (std::size_t i = 0; i < n_agents; ++i) {
        Rng rng(derive_seed(seed, "agent-weight-mask", i));
        WeightMask m{netcore::TensorSet::ones(topo)};
        for (std::size_t k = 0; k < topo.hidden_count(); ++k) {
            auto& l = m.layers[k];
            const auto nw = static_cast<std::size_t>(l.weight.size());
            const auto total = nw + static_cast<std::size_t>(l.recurrent_weight.size());
            for (auto pos : detail::sample_positions(total, prune_count(schedule.ratio(k), total), rng)) {
                // Row-major position over weight, then recurrent_weight.
                auto& t = pos < nw ? l.weight : l.recurrent_weight;
                const auto p = static_cast<Eigen::Index>(pos < nw ? pos : pos - nw);
                t(p / t.cols(), p % t.cols()) = 0.0;
            }
        }
        g.masks.push_back(std::move(m));
    }
    return g;
}

/// Structured expansion: a pruned neuron zeroes its incoming weight row(s),
/// its bias entries and its outgoing column in the next layer. For a GRU
/// hidden unit the reset/update/candidate rows and its recurrent column go together.
inline WeightMask expand_to_weight_mask(const NeuronMask& mask, const netcore::NetworkTopology& topo) {
    const auto widths = topo.hidden_widths();
    if (mask.layers.size() != widths.size()) throw UsageError("neuron mask does not match topology");
    WeightMask w{netcore::TensorSet::ones(topo)};
    for (std::size_t k = 0; k < widths.size(); ++k) {
        if (mask.layers[k].size() != widths[k]) throw UsageError("neuron mask width mismatch");
        const auto& spec = topo.layer(k);
        auto& cur = w.layers[k];
        auto& next = w.layers[k + 1];
        const auto H = static_cast<Eigen::Index>(spec.output_width);
        for (std::size_t j = 0; j < widths[k]; ++j) {
            if (mask.layers[k][j]) continue;
            const auto jj = static_cast<Eigen::Index>(j);
            if (spec.kind == netcore::LayerKind::dense) {
                cur.weight.row(jj).setZero();
                cur.bias[jj] = 0.0;
            } else {
                for (Eigen::Index gate = 0; gate < 3; ++gate) {
                    cur.weight.row(gate * H + jj).setZero();
                    cur.bias[gate * H + jj] = 0.0;
                    cur.recurrent_weight.row(gate * H + jj).setZero();
                    cur.recurrent_bias[gate * H + jj] = 0.0;
                }
                cur.recurrent_weight.col(jj).setZero();
            }
            next.weight.col(jj).setZero();
        }
    }
    return w;
}

/// Parameters as seen through a weight mask (theta ⊙ M).
inline netcore::ParameterStore apply_weight_mask(const netcore::ParameterStore& params, const WeightMask& mask) {
    netcore::ParameterStore p = params;
    p.multiply(mask);
    return p;
}

}  // namespace snpps::pruning
