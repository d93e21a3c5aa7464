#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>

#include "snpps/errors.hpp"
#include "snpps/pruning/masks.hpp"

// Mask file format (see docs/file_formats.md):
//
//   [# comment lines]
//   snpps-masks 1
//   kind structured|unstructured
//   topology <16 hex digits>
//   schedule <a-b-c>
//   seed <u64>
//   agents <N>
//   structured:   mask <agent> <hidden-layer> <0/1 string>
//   unstructured: mask <agent> <layer> <tensor-name> <0/1 string, row-major>
//   end

namespace snpps::pruning {

namespace detail {

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    for (int i = 15; i >= 0; --i) {
        buf[i] = "0123456789abcdef"[v & 0xf];
        v >>= 4;
    }
    buf[16] = '\0';
    return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError("mask file", "bad topology hash");
    return v;
}

// Leading lines starting with '#' carry provenance and are ignored.
inline void skip_comments(std::istream& is) {
    std::string line;
    while (is >> std::ws && is.peek() == '#') std::getline(is, line);
}

inline void mask_expect(std::istream& is, const std::string& word) {
    std::string tok;
    if (!(is >> tok) || tok != word) throw ConfigError("mask file", "expected '" + word + "', got '" + tok + "'");
}

template <class M>
std::string bits_of(const M& m) {
    std::string s;
    const Eigen::Index cols = M::ColsAtCompileTime == 1 ? 1 : m.cols();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < cols; ++c) s += m(r, c) != 0.0 ? '1' : '0';
    return s;
}

template <class M>
void fill_bits(M& m, const std::string& s) {
    const Eigen::Index cols = M::ColsAtCompileTime == 1 ? 1 : m.cols();
    if (static_cast<Eigen::Index>(s.size()) != m.rows() * cols) throw ConfigError("mask file", "bit string length");
    Eigen::Index i = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < cols; ++c, ++i) {
            if (s[i] != '0' && s[i] != '1') throw ConfigError("mask file", "bit string must be 0/1");
            m(r, c) = s[i] == '1' ? 1.0 : 0.0;
        }
}

inline void write_header(std::ostream& os, const char* kind, std::uint64_t topo_hash, const PruningSchedule& sched,
                         Seed seed, std::size_t n) {
    os << "snpps-masks 1\nkind " << kind << "\ntopology " << hex64(topo_hash) << "\nschedule " << sched.str()
       << "\nseed " << seed << "\nagents " << n << '\n';
}

}  // namespace detail

inline void save_masks(std::ostream& os, const NeuronMaskGroup& g) {
    detail::write_header(os, "structured", g.topology_hash, g.schedule, g.seed, g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t k = 0; k < g.masks[i].layers.size(); ++k) {
            os << "mask " << i << ' ' << k << ' ';
            for (auto b : g.masks[i].layers[k]) os << (b ? '1' : '0');
            os << '\n';
        }
    os << "end\n";
}

inline void save_masks(std::ostream& os, const WeightMaskGroup& g) {
    detail::write_header(os, "unstructured", g.topology_hash, g.schedule, g.seed, g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t k = 0; k < g.masks[i].layers.size(); ++k) {
            const auto& l = g.masks[i].layers[k];
            os << "mask " << i << ' ' << k << " weight " << detail::bits_of(l.weight) << '\n';
            os << "mask " << i << ' ' << k << " bias " << detail::bits_of(l.bias) << '\n';
            if (l.recurrent_weight.size()) {
                os << "mask " << i << ' ' << k << " recurrent_weight " << detail::bits_of(l.recurrent_weight) << '\n';
                os << "mask " << i << ' ' << k << " recurrent_bias " << detail::bits_of(l.recurrent_bias) << '\n';
            }
        }
    os << "end\n";
}

using MaskFile = std::variant<NeuronMaskGroup, WeightMaskGroup>;

/// Loads either mask kind. Unstructured masks need the topology to size tensors,
/// and the file's topology hash must match it.
inline MaskFile load_masks(std::istream& is, const netcore::NetworkTopology& topo) {
    detail::skip_comments(is);
    detail::mask_expect(is, "snpps-masks");
    int version = 0;
    if (!(is >> version) || version != 1) throw ConfigError("mask file", "unsupported version");
    std::string kind, hash, sched;
    Seed seed = 0;
    std::size_t n = 0;
    detail::mask_expect(is, "kind");
    is >> kind;
    detail::mask_expect(is, "topology");
    is >> hash;
    detail::mask_expect(is, "schedule");
    is >> sched;
    detail::mask_expect(is, "seed");
    is >> seed;
    detail::mask_expect(is, "agents");
    if (!(is >> n) || n == 0) throw ConfigError("mask file", "bad agent count");
    const std::uint64_t h = detail::parse_hex64(hash);
    if (h != topo.hash()) throw ConfigError("mask file", "topology hash does not match the network");
    const auto schedule = PruningSchedule::parse(sched);
    const auto widths = topo.hidden_widths();

    if (kind == "structured") {
        NeuronMaskGroup g{std::vector<NeuronMask>(n), schedule, seed, h};
        for (auto& m : g.masks) m.layers.resize(widths.size());
        for (std::size_t line = 0; line < n * widths.size(); ++line) {
            std::size_t i = 0, k = 0;
            std::string bits;
            detail::mask_expect(is, "mask");
            if (!(is >> i >> k >> bits) || i >= n || k >= widths.size() || bits.size() != widths[k])
                throw ConfigError("mask file", "bad structured mask record");
            auto& out = g.masks[i].layers[k];
            out.clear();
            for (char c : bits) {
                if (c != '0' && c != '1') throw ConfigError("mask file", "bit string must be 0/1");
                out.push_back(c == '1');
            }
        }
        detail::mask_expect(is, "end");
        return g;
    }
    if (kind == "unstructured") {
        WeightMaskGroup g{std::vector<WeightMask>(n, WeightMask{netcore::TensorSet::ones(topo)}), schedule, seed, h};
        std::string tok;
        while (is >> tok && tok == "mask") {
            std::size_t i = 0, k = 0;
            std::string name, bits;
            if (!(is >> i >> k >> name >> bits) || i >= n || k >= topo.layer_count())
                throw ConfigError("mask file", "bad unstructured mask record");
            auto& l = g.masks[i].layers[k];
            if (name == "weight") detail::fill_bits(l.weight, bits);
            else if (name == "bias") detail::fill_bits(l.bias, bits);
            else if (name == "recurrent_weight") detail::fill_bits(l.recurrent_weight, bits);
            else if (name == "recurrent_bias") detail::fill_bits(l.recurrent_bias, bits);
            else throw ConfigError("mask file", "unknown tensor '" + name + "'");
        }
        if (tok != "end") throw ConfigError("mask file", "expected 'end'");
        return g;
    }
    throw ConfigError("mask file", "unknown mask kind '" + kind + "'");
}

}  // namespace snpps::pruning
