#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "snpps/errors.hpp"
#include "snpps/pruning/masks.hpp"

namespace snpps::pruning {

struct LayerOverlap {
    double mean_shared = 0.0;  // mean over agent pairs of |kept_i ∩ kept_j|
    std::size_t min_shared = 0;
    std::size_t max_shared = 0;
    std::vector<std::size_t> owners;  // per neuron: how many agents keep it
};

/// Exact pairwise overlap statistics per hidden vector. With a single agent
/// there are no pairs and the shared counts are reported as zero.
inline std::vector<LayerOverlap> mask_overlap_stats(const NeuronMaskGroup& group) {
    if (group.masks.empty()) throw UsageError("mask group is empty");
    const std::size_t n = group.size();
    const std::size_t layers = group.masks.front().layers.size();
    std::vector<LayerOverlap> out(layers);
    for (std::size_t k = 0; k < layers; ++k) {
        auto& s = out[k];
        const std::size_t width = group.masks.front().layers[k].size();
        s.owners.assign(width, 0);
        for (const auto& m : group.masks)
            for (std::size_t j = 0; j < width; ++j) s.owners[j] += m.layers.at(k).at(j);

        std::size_t pairs = 0, total = 0;
        std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0;
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b) {
                std::size_t shared = 0;
                for (std::size_t j = 0; j < width; ++j)
                    shared += group.masks[a].layers[k][j] & group.masks[b].layers[k][j];
                total += shared;
                lo = std::min(lo, shared);
                hi = std::max(hi, shared);
                ++pairs;
            }
        if (pairs) {
            s.mean_shared = static_cast<double>(total) / static_cast<double>(pairs);
            s.min_shared = lo;
            s.max_shared = hi;
        }
    }
    return out;
}

}  // namespace snpps::pruning
