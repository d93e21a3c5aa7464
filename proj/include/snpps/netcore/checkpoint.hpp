#pragma once

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>

#include "snpps/errors.hpp"
#include "snpps/netcore/tensors.hpp"
#include "snpps/netcore/topology.hpp"

// Text checkpoint format (see docs/file_formats.md):
//
//   [# comment lines]
//   snpps-params 1
//   layers <L>
//   layer <k> <dense|gru> <in> <out> <activation>
//   tensor <name> <rows> <cols>
//   <rows lines of cols space-separated values, row-major>
//   ...
//   end
//
// Values use the shortest decimal form that round-trips to the same double.

namespace snpps::netcore {

namespace detail {

inline void write_double(std::ostream& os, double v) {
    char buf[40];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw UsageError("cannot format value");
    os.write(buf, end - buf);
}

inline double read_double(std::istream& is) {
    std::string tok;
    if (!(is >> tok)) throw ConfigError("checkpoint", "unexpected end of data");
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw ConfigError("checkpoint", "malformed value '" + tok + "'");
    return v;
}

// Leading lines starting with '#' carry provenance and are ignored.
inline void skip_comments(std::istream& is) {
    std::string line;
    while (is >> std::ws && is.peek() == '#') std::getline(is, line);
}

inline void expect(std::istream& is, const std::string& word) {
    std::string tok;
    if (!(is >> tok) || tok != word)
        throw ConfigError("checkpoint", "expected '" + word + "', got '" + tok + "'");
}

template <class M>
void write_tensor(std::ostream& os, const char* name, const M& m) {
    const Eigen::Index rows = m.rows();
    const Eigen::Index cols = M::ColsAtCompileTime == 1 ? 1 : m.cols();
    os << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (c) os << ' ';
            write_double(os, m(r, c));
        }
        os << '\n';
    }
}

template <class M>
void read_tensor(std::istream& is, const char* name, M& m) {
    expect(is, "tensor");
    expect(is, name);
    Eigen::Index rows = 0, cols = 0;
    if (!(is >> rows >> cols)) throw ConfigError("checkpoint", std::string("bad shape for ") + name);
    const Eigen::Index want_cols = M::ColsAtCompileTime == 1 ? 1 : m.cols();
    if (rows != m.rows() || cols != want_cols)
        throw ConfigError("checkpoint", std::string("shape mismatch for ") + name);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = read_double(is);
}

}  // namespace detail

inline void save_parameters(std::ostream& os, const NetworkTopology& topo, const ParameterStore& params) {
    if (!params.matches(topo)) throw UsageError("parameters do not match topology");
    os << "snpps-params 1\n";
    os << "layers " << topo.layer_count() << '\n';
    for (std::size_t k = 0; k < topo.layer_count(); ++k) {
        const auto& s = topo.layer(k);
        os << "layer " << k << ' ' << to_string(s.kind) << ' ' << s.input_width << ' ' << s.output_width << ' '
           << to_string(s.activation) << '\n';
        const auto& l = params.layers[k];
        detail::write_tensor(os, "weight", l.weight);
        detail::write_tensor(os, "bias", l.bias);
        if (s.kind == LayerKind::gru) {
            detail::write_tensor(os, "recurrent_weight", l.recurrent_weight);
            detail::write_tensor(os, "recurrent_bias", l.recurrent_bias);
        }
    }
    os << "end\n";
}

struct LoadedParameters {
    NetworkTopology topology;
    ParameterStore params;
};

inline LoadedParameters load_parameters(std::istream& is) {
    detail::skip_comments(is);
    detail::expect(is, "snpps-params");
    int version = 0;
    if (!(is >> version) || version != 1) throw ConfigError("checkpoint", "unsupported version");
    detail::expect(is, "layers");
    std::size_t count = 0;
    if (!(is >> count) || count == 0) throw ConfigError("checkpoint", "bad layer count");

    std::vector<LayerSpec> specs;
    std::vector<LayerTensors> tensors;
    for (std::size_t k = 0; k < count; ++k) {
        detail::expect(is, "layer");
        std::size_t idx = 0, in = 0, out = 0;
        std::string kind, act;
        if (!(is >> idx >> kind >> in >> out >> act) || idx != k)
            throw ConfigError("checkpoint", "bad layer record " + std::to_string(k));
        LayerSpec spec;
        try {
            spec = {parse_layer_kind(kind), in, out, parse_activation(act)};
        } catch (const UsageError& e) {
            throw ConfigError("checkpoint", e.what());
        }
        specs.push_back(spec);
        // Shape this layer via a one-layer topology to reuse the allocation rules.
        auto shaped = TensorSet::zeros(NetworkTopology({spec}));
        auto& l = shaped.layers.front();
        detail::read_tensor(is, "weight", l.weight);
        detail::read_tensor(is, "bias", l.bias);
        if (spec.kind == LayerKind::gru) {
            detail::read_tensor(is, "recurrent_weight", l.recurrent_weight);
            detail::read_tensor(is, "recurrent_bias", l.recurrent_bias);
        }
        tensors.push_back(std::move(l));
    }
    detail::expect(is, "end");
    LoadedParameters out;
    try {
        out.topology = NetworkTopology(std::move(specs));
    } catch (const UsageError& e) {
        throw ConfigError("checkpoint", e.what());
    }
    out.params.layers = std::move(tensors);
    return out;
}

inline std::string to_checkpoint_string(const NetworkTopology& topo, const ParameterStore& params) {
    std::ostringstream os;
    save_parameters(os, topo, params);
    return os.str();
}

}  // namespace snpps::netcore
