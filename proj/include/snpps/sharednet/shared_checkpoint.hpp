#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <variant>

#include "snpps/errors.hpp"
#include "snpps/netcore/checkpoint.hpp"
#include "snpps/pruning/mask_io.hpp"
#include "snpps/sharednet/shared_network.hpp"

// Shared-network checkpoint:
//
//   snpps-shared 1
//   run <run-id>
//   mode <name>
//   agents <N>
//   groups <N> <c_0> ... <c_{N-1}>      (Grouped only, otherwise "groups 0")
//   schedule <a-b-c>
//   base <L>
//   layer <kind> <in> <out> <activation>   (L lines, topology before one-hot widening)
//   roots <R>
//   <R netcore parameter blocks>
//   masks 0|1
//   [<mask file block>]

namespace snpps::sharednet {

struct SharedCheckpoint {
    std::string run_id;
    SharedAgentNetwork net;
};

inline void save_shared(std::ostream& os, const SharedAgentNetwork& net, const std::string& run_id) {
    os << "snpps-shared 1\n";
    os << "run " << (run_id.empty() ? "-" : run_id) << '\n';
    os << "mode " << net.mode().name() << '\n';
    os << "agents " << net.n_agents() << '\n';
    os << "groups " << (net.mode().is_grouped() ? net.mode().assignment.size() : 0);
    if (net.mode().is_grouped())
        for (auto c : net.mode().assignment) os << ' ' << c;
    os << '\n';
    os << "schedule " << net.schedule().str() << '\n';
    const auto& base = net.base_topology();
    os << "base " << base.layer_count() << '\n';
    for (const auto& l : base.layers())
        os << "layer " << netcore::to_string(l.kind) << ' ' << l.input_width << ' ' << l.output_width << ' '
           << netcore::to_string(l.activation) << '\n';
    os << "roots " << net.roots().size() << '\n';
    for (const auto& r : net.roots()) netcore::save_parameters(os, net.topology(), r);
    if (net.neuron_masks()) {
        os << "masks 1\n";
        pruning::save_masks(os, *net.neuron_masks());
    } else if (net.weight_masks()) {
        os << "masks 1\n";
        pruning::save_masks(os, *net.weight_masks());
    } else {
        os << "masks 0\n";
    }
}

inline SharedCheckpoint load_shared(std::istream& is) {
    auto expect = [&](const char* w) { netcore::detail::expect(is, w); };
    expect("snpps-shared");
    int version = 0;
    if (!(is >> version) || version != 1) throw ConfigError("checkpoint", "unsupported shared version");
    SharedCheckpoint out;
    std::string mode_name;
    std::size_t n = 0, ngroups = 0, base_layers = 0, roots = 0;
    expect("run");
    is >> out.run_id;
    expect("mode");
    is >> mode_name;
    expect("agents");
    is >> n;
    expect("groups");
    is >> ngroups;
    std::vector<std::size_t> groups(ngroups);
    for (auto& g : groups) is >> g;
    std::string sched;
    expect("schedule");
    is >> sched;
    expect("base");
    is >> base_layers;
    std::vector<netcore::LayerSpec> specs;
    for (std::size_t k = 0; k < base_layers; ++k) {
        std::string kind, act;
        std::size_t in = 0, width = 0;
        expect("layer");
        if (!(is >> kind >> in >> width >> act)) throw ConfigError("checkpoint", "bad base layer");
        specs.push_back({netcore::parse_layer_kind(kind), in, width, netcore::parse_activation(act)});
    }
    if (!is) throw ConfigError("checkpoint", "truncated shared header");
    SharingMode mode(SharingMode::parse_kind(mode_name), groups);
    const netcore::NetworkTopology base(std::move(specs));
    out.net = SharedAgentNetwork(base, mode, n, pruning::PruningSchedule::parse(sched), 0, 0);
    expect("roots");
    is >> roots;
    if (roots != out.net.roots().size()) throw ConfigError("checkpoint", "root count does not match mode");
    for (std::size_t r = 0; r < roots; ++r) {
        auto loaded = netcore::load_parameters(is);
        if (!(loaded.topology == out.net.topology())) throw ConfigError("checkpoint", "root topology mismatch");
        out.net.roots()[r] = std::move(loaded.params);
    }
    expect("masks");
    int has_masks = 0;
    is >> has_masks;
    if (has_masks) {
        auto m = pruning::load_masks(is, out.net.topology());
        if (auto* s = std::get_if<pruning::NeuronMaskGroup>(&m)) out.net.set_neuron_masks(std::move(*s));
        else out.net.set_weight_masks(std::get<pruning::WeightMaskGroup>(std::move(m)));
    }
    return out;
}

}  // namespace snpps::sharednet
