#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snpps/errors.hpp"
#include "snpps/netcore/network.hpp"
#include "snpps/netcore/tensors.hpp"
#include "snpps/netcore/topology.hpp"
#include "snpps/pruning/masks.hpp"
#include "snpps/pruning/schedule.hpp"
#include "snpps/rng.hpp"
#include "snpps/sharednet/sharing_mode.hpp"

namespace snpps::sharednet {

using netcore::GradientStore;
using netcore::Matrix;
using netcore::NetworkTopology;
using netcore::ParameterStore;
using netcore::Vector;

struct ParameterCount {
    std::size_t trainable = 0;        // all root parameters
    std::size_t per_network = 0;      // one root network
    std::size_t networks = 0;         // number of root networks
    std::size_t one_hot_weights = 0;  // weights attached to agent-indication inputs
};

struct AgentOutput {
    Vector output;
    netcore::RecurrentState state;
    std::vector<Vector> hidden;  // masked post-activation hidden vectors
};

/// One forward pass through one root, over a subset of the batch columns.
struct Partition {
    std::size_t root = 0;
    std::optional<std::size_t> agent;  // set when parameters are agent-specific (USNP-PS)
    std::vector<Eigen::Index> columns;
    bool all_columns = false;
    netcore::ForwardTrace trace;
};

struct BatchTrace {
    std::vector<Partition> parts;
    Eigen::Index batch = 0;
};

struct BatchResult {
    Matrix output;
    Matrix state;
    BatchTrace trace;
};

/// N agents bound to shared root parameters under a SharingMode.
/// Agent ids are 0-based.
class SharedAgentNetwork {
public:
    SharedAgentNetwork() = default;

    /// `base` takes the raw observation as input; one-hot modes widen it by N.
    SharedAgentNetwork(const NetworkTopology& base, SharingMode mode, std::size_t n_agents,
                       pruning::PruningSchedule schedule, Seed init_seed, Seed mask_seed)
        : base_(base), mode_(std::move(mode)), n_agents_(n_agents), schedule_(std::move(schedule)) {
        if (n_agents_ == 0) throw UsageError("shared network needs at least one agent");
        mode_.validate(n_agents_);
        topology_ = mode_.one_hot() ? base_.with_extra_inputs(n_agents_) : base_;
        if (schedule_.size() == 0) schedule_ = pruning::PruningSchedule::none(topology_.hidden_count());
        if (mode_.masked()) schedule_.validate(topology_);

        if (mode_.is_grouped()) {
            for (std::size_t c = 0; c < mode_.cluster_count(); ++c)
                roots_.push_back(netcore::init_parameters(topology_, derive_seed(init_seed, "cluster", c)));
        } else {
            roots_.push_back(netcore::init_parameters(topology_, init_seed));
        }

        if (mode_.kind == SharingKind::SNP_NPS)
            neuron_masks_ = pruning::generate_single_ticket(topology_, schedule_, n_agents_, mask_seed);
        else if (mode_.structured())
            neuron_masks_ = pruning::generate_group_tickets(topology_, schedule_, n_agents_, mask_seed);
        else if (mode_.unstructured())
            weight_masks_ = pruning::generate_unstructured_masks(topology_, schedule_, n_agents_, mask_seed);
        cache_mask_vectors();
    }

    const NetworkTopology& topology() const noexcept { return topology_; }
    const NetworkTopology& base_topology() const noexcept { return base_; }
    const SharingMode& mode() const noexcept { return mode_; }
    const pruning::PruningSchedule& schedule() const noexcept { return schedule_; }
    std::size_t n_agents() const noexcept { return n_agents_; }
    std::size_t observation_width() const { return base_.input_width(); }
    std::size_t output_width() const { return topology_.output_width(); }
    std::size_t state_width() const { return topology_.state_width(); }

    std::vector<ParameterStore>& roots() noexcept { return roots_; }
    const std::vector<ParameterStore>& roots() const noexcept { return roots_; }
    const std::optional<pruning::NeuronMaskGroup>& neuron_masks() const noexcept { return neuron_masks_; }
    const std::optional<pruning::WeightMaskGroup>& weight_masks() const noexcept { return weight_masks_; }

    /// Replaces structured masks (e.g. loaded from a file). Shapes must match.
    void set_neuron_masks(pruning::NeuronMaskGroup g) {
        if (!mode_.structured()) throw UsageError("mode does not use structured masks");
        if (g.size() != n_agents_) throw UsageError("mask group size differs from agent count");
        for (const auto& m : g.masks) pruning::expand_to_weight_mask(m, topology_);
        neuron_masks_ = std::move(g);
        cache_mask_vectors();
    }

    void set_weight_masks(pruning::WeightMaskGroup g) {
        if (!mode_.unstructured()) throw UsageError("mode does not use weight masks");
        if (g.size() != n_agents_) throw UsageError("mask group size differs from agent count");
        for (const auto& m : g.masks)
            if (!m.matches(topology_)) throw UsageError("weight mask does not match topology");
        weight_masks_ = std::move(g);
    }

    std::size_t root_of(std::size_t agent) const {
        check_agent(agent);
        return mode_.is_grouped() ? mode_.assignment[agent] : 0;
    }

    /// Number of agents whose gradients are averaged into a root.
    std::size_t root_members(std::size_t root) const {
        if (!mode_.is_grouped()) return n_agents_;
        std::size_t n = 0;
        for (auto c : mode_.assignment) n += c == root;
        return n;
    }

    /// Agent i's effective parameters theta ⊙ M_i as an explicit store.
    ParameterStore effective_parameters(std::size_t agent) const {
        const auto& root = roots_[root_of(agent)];
        if (neuron_masks_) return pruning::apply_weight_mask(root, pruning::expand_to_weight_mask((*neuron_masks_)[agent], topology_));
        if (weight_masks_) return pruning::apply_weight_mask(root, (*weight_masks_)[agent]);
        return root;
    }

    /// Batched forward. Column b of `observations` belongs to agent `agents[b]`.
    BatchResult forward(std::span<const std::size_t> agents, const Matrix& observations,
                        const Matrix& state = Matrix()) const {
        const Eigen::Index batch = observations.cols();
        if (static_cast<Eigen::Index>(agents.size()) != batch) throw UsageError("one agent id per column required");
        if (static_cast<std::size_t>(observations.rows()) != observation_width())
            throw UsageError("observation width mismatch: expected " + std::to_string(observation_width()) +
                             ", got " + std::to_string(observations.rows()));
        for (auto a : agents) check_agent(a);
        const auto sw = static_cast<Eigen::Index>(state_width());
        if (state.size() != 0 && (state.rows() != sw || state.cols() != batch))
            throw UsageError("recurrent state shape mismatch");

        BatchResult res;
        res.trace.batch = batch;
        res.output.resize(static_cast<Eigen::Index>(output_width()), batch);
        res.state.resize(sw, batch);
        for (auto& part : make_partitions(agents)) {
            const Matrix x = gather_input(part, agents, observations);
            const Matrix h = state.size() == 0 ? Matrix() : gather(part, state);
            netcore::ForwardResult fr;
            if (part.agent) {
                fr = netcore::forward(effective_parameters(*part.agent), topology_, x, h);
            } else if (neuron_masks_) {
                fr = netcore::forward(roots_[part.root], topology_, x, h, build_masks(part, agents));
            } else {
                fr = netcore::forward(roots_[part.root], topology_, x, h);
            }
            scatter(part, fr.output, res.output);
            scatter(part, fr.state, res.state);
            part.trace = std::move(fr.trace);
            res.trace.parts.push_back(std::move(part));
        }
        return res;
    }

    std::vector<GradientStore> zero_gradients() const {
        std::vector<GradientStore> g;
        for (const auto& r : roots_) g.push_back(GradientStore::zeros_like(r));
        return g;
    }

    /// Adds the summed (un-normalized) gradient of every column into `root_grads`.
    /// Returns the gradient w.r.t. the incoming recurrent state.
    Matrix backward_into(std::vector<GradientStore>& root_grads, const BatchTrace& trace, const Matrix& d_output,
                         const Matrix& d_state = Matrix()) const {
        if (root_grads.size() != roots_.size()) throw UsageError("one gradient store per root required");
        if (d_output.cols() != trace.batch || static_cast<std::size_t>(d_output.rows()) != output_width())
            throw UsageError("output gradient shape mismatch");
        Matrix d_prev = Matrix::Zero(static_cast<Eigen::Index>(state_width()), trace.batch);
        for (const auto& part : trace.parts) {
            const Matrix dy = gather(part, d_output);
            const Matrix ds = d_state.size() == 0 ? Matrix() : gather(part, d_state);
            netcore::BackwardResult br;
            if (part.agent) {
                auto g = GradientStore::zeros_like(roots_[part.root]);
                br = netcore::backward_into(g, effective_parameters(*part.agent), topology_, part.trace, dy, ds);
                g.multiply((*weight_masks_)[*part.agent]);
                root_grads[part.root].add_scaled(g);
                root_grads[part.root].count += g.count;
            } else {
                br = netcore::backward_into(root_grads[part.root], roots_[part.root], topology_, part.trace, dy, ds);
            }
            scatter(part, br.d_state, d_prev);
        }
        return d_prev;
    }

    std::vector<GradientStore> backward(const BatchTrace& trace, const Matrix& d_output,
                                        const Matrix& d_state = Matrix()) const {
        auto g = zero_gradients();
        backward_into(g, trace, d_output, d_state);
        return g;
    }

    /// Divides summed root gradients by the number of agents sharing each root.
    void normalize(std::vector<GradientStore>& root_grads) const {
        for (std::size_t r = 0; r < root_grads.size(); ++r)
            root_grads[r].scale(1.0 / static_cast<double>(root_members(r)));
    }

    /// Root gradient from per-agent gradients (each already masked by that
    /// agent's mask): elementwise sum over the agents of a root divided by
    /// the number of agents sharing it.
    std::vector<GradientStore> accumulate_agent_gradients(const std::vector<GradientStore>& per_agent) const {
        if (per_agent.size() != n_agents_) throw UsageError("one gradient per agent required");
        auto out = zero_gradients();
        for (std::size_t i = 0; i < n_agents_; ++i) {
            auto& dst = out[root_of(i)];
            if (!dst.same_shape(per_agent[i])) throw UsageError("agent gradient shape mismatch");
            dst.add_scaled(per_agent[i]);
            dst.count += per_agent[i].count;
        }
        normalize(out);
        return out;
    }

    AgentOutput agent_forward(std::size_t agent, const Vector& observation,
                              const netcore::RecurrentState& state = {}) const {
        check_agent(agent);
        const std::size_t ids[] = {agent};
        const Matrix h = state.hidden.size() == 0 ? Matrix() : Matrix(state.hidden);
        auto r = forward(ids, Matrix(observation), h);
        AgentOutput out;
        out.output = r.output.col(0);
        out.state.hidden = r.state.col(0);
        const auto& tr = r.trace.parts.front().trace;
        for (std::size_t k = 0; k < topology_.hidden_count(); ++k) out.hidden.push_back(tr.hidden(k).col(0));
        return out;
    }

    ParameterCount parameter_count() const {
        ParameterCount c;
        c.per_network = roots_.front().size();
        c.networks = roots_.size();
        c.trainable = c.per_network * c.networks;
        if (mode_.one_hot()) c.one_hot_weights = n_agents_ * static_cast<std::size_t>(roots_.front().layers[0].weight.rows());
        return c;
    }

private:
    void check_agent(std::size_t agent) const {
        if (agent >= n_agents_)
            throw UsageError("unknown agent id " + std::to_string(agent) + " (have " + std::to_string(n_agents_) + ")");
    }

    void cache_mask_vectors() {
        mask_vectors_.clear();
        if (!neuron_masks_) return;
        for (const auto& m : neuron_masks_->masks) {
            std::vector<Vector> per_layer;
            for (std::size_t k = 0; k < m.layers.size(); ++k) per_layer.push_back(m.as_vector(k));
            mask_vectors_.push_back(std::move(per_layer));
        }
    }

    std::vector<Partition> make_partitions(std::span<const std::size_t> agents) const {
        std::vector<Partition> parts;
        const auto batch = static_cast<Eigen::Index>(agents.size());
        if (!mode_.is_grouped() && !mode_.unstructured()) {
            Partition p;
            p.all_columns = true;
            p.columns.resize(static_cast<std::size_t>(batch));
            for (Eigen::Index b = 0; b < batch; ++b) p.columns[static_cast<std::size_t>(b)] = b;
            parts.push_back(std::move(p));
            return parts;
        }
        const std::size_t keys = mode_.is_grouped() ? roots_.size() : n_agents_;
        std::vector<Partition> by_key(keys);
        for (Eigen::Index b = 0; b < batch; ++b) {
            const auto a = agents[static_cast<std::size_t>(b)];
            const std::size_t key = mode_.is_grouped() ? root_of(a) : a;
            by_key[key].columns.push_back(b);
        }
        for (std::size_t key = 0; key < keys; ++key) {
            if (by_key[key].columns.empty()) continue;
            auto& p = by_key[key];
            p.root = mode_.is_grouped() ? key : 0;
            if (mode_.unstructured()) p.agent = key;
            p.all_columns = static_cast<Eigen::Index>(p.columns.size()) == batch;
            parts.push_back(std::move(p));
        }
        return parts;
    }

    static Matrix gather(const Partition& p, const Matrix& m) {
        if (p.all_columns) return m;
        Matrix out(m.rows(), static_cast<Eigen::Index>(p.columns.size()));
        for (std::size_t c = 0; c < p.columns.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(p.columns[c]);
        return out;
    }

    static void scatter(const Partition& p, const Matrix& src, Matrix& dst) {
        if (p.all_columns) {
            dst = src;
            return;
        }
        for (std::size_t c = 0; c < p.columns.size(); ++c) dst.col(p.columns[c]) = src.col(static_cast<Eigen::Index>(c));
    }

    Matrix gather_input(const Partition& p, std::span<const std::size_t> agents, const Matrix& obs) const {
        if (!mode_.one_hot()) return gather(p, obs);
        const auto n = static_cast<Eigen::Index>(p.columns.size());
        Matrix x = Matrix::Zero(static_cast<Eigen::Index>(topology_.input_width()), n);
        const auto ow = static_cast<Eigen::Index>(observation_width());
        for (Eigen::Index c = 0; c < n; ++c) {
            const auto col = p.columns[static_cast<std::size_t>(c)];
            x.col(c).head(ow) = obs.col(col);
            x(ow + static_cast<Eigen::Index>(agents[static_cast<std::size_t>(col)]), c) = 1.0;
        }
        return x;
    }

    netcore::HiddenMasks build_masks(const Partition& p, std::span<const std::size_t> agents) const {
        netcore::HiddenMasks masks;
        const auto widths = topology_.hidden_widths();
        const auto n = static_cast<Eigen::Index>(p.columns.size());
        for (std::size_t k = 0; k < widths.size(); ++k) {
            Matrix m(static_cast<Eigen::Index>(widths[k]), n);
            for (Eigen::Index c = 0; c < n; ++c)
                m.col(c) = mask_vectors_[agents[static_cast<std::size_t>(p.columns[static_cast<std::size_t>(c)])]][k];
            masks.push_back(std::move(m));
        }
        return masks;
    }

    NetworkTopology base_;
    NetworkTopology topology_;
    SharingMode mode_;
    std::size_t n_agents_ = 0;
    pruning::PruningSchedule schedule_;
    std::vector<ParameterStore> roots_;
    std::optional<pruning::NeuronMaskGroup> neuron_masks_;
    std::optional<pruning::WeightMaskGroup> weight_masks_;
    std::vector<std::vector<Vector>> mask_vectors_;
};

}  // namespace snpps::sharednet
