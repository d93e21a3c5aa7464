#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "snpps/netcore/optimizer.hpp"
#include "snpps/sharednet/features.hpp"
#include "snpps/sharednet/shared_checkpoint.hpp"
#include "snpps/sharednet/shared_network.hpp"

using namespace snpps;
using namespace snpps::sharednet;
using netcore::Activation;
using netcore::LayerKind;
using pruning::parse_schedule;

namespace {

std::vector<std::size_t> all_agents(std::size_t n) {
    std::vector<std::size_t> a(n);
    std::iota(a.begin(), a.end(), 0);
    return a;
}

// Same observation for every column.
Matrix repeat(const Vector& x, std::size_t n) { return x.replicate(1, static_cast<Eigen::Index>(n)); }

std::size_t shape_product_count(const NetworkTopology& t) {
    std::size_t n = 0;
    for (const auto& l : t.layers()) {
        if (l.kind == LayerKind::dense)
            n += l.input_width * l.output_width + l.output_width;
        else
            n += 3 * l.output_width * (l.input_width + l.output_width + 2);
    }
    return n;
}

const NetworkTopology kLbfTopo = NetworkTopology::mlp(75, {128, 128, 128}, 6);

}  // namespace

TEST(AgentForward, FuPSAgentsAgree) {
    SharedAgentNetwork net(NetworkTopology::mlp(6, {16, 16}, 3), SharingKind::FuPS, 4, {}, 1, 2);
    const Vector x = Vector::Random(6);
    const auto out = net.forward(all_agents(4), repeat(x, 4)).output;
    for (int i = 1; i < 4; ++i) EXPECT_EQ(out.col(i), out.col(0));
}

TEST(AgentForward, ZeroScheduleEqualsFuPS) {
    const auto topo = NetworkTopology::recurrent(6, 16, 16, 3);
    SharedAgentNetwork fups(topo, SharingKind::FuPS, 3, {}, 7, 8);
    SharedAgentNetwork snp(topo, SharingKind::SNP_PS, 3, parse_schedule("0-0"), 7, 8);
    const Matrix x = Matrix::Random(6, 3), h = Matrix::Random(16, 3);
    const auto a = fups.forward(all_agents(3), x, h), b = snp.forward(all_agents(3), x, h);
    EXPECT_EQ(a.output, b.output);
    EXPECT_EQ(a.state, b.state);
    const Matrix dy = Matrix::Random(3, 3);
    const auto ga = fups.backward(a.trace, dy), gb = snp.backward(b.trace, dy);
    EXPECT_EQ(ga[0].flatten(), gb[0].flatten());
}

TEST(AgentForward, DistinctMasksIdentifyAgents) {
    const auto topo = NetworkTopology::mlp(8, {32, 32}, 4);
    int differ = 0;
    for (Seed s = 0; s < 200; ++s) {
        SharedAgentNetwork net(topo, SharingKind::SNP_PS, 2, parse_schedule("0.5-0.5"), s, s + 1000);
        Rng rng(s);
        Vector x(8);
        for (auto& v : x) v = rng.uniform(-1, 1);
        const std::size_t ids[] = {0, 1};
        const auto out = net.forward(ids, repeat(x, 2)).output;
        differ += out.col(0) != out.col(1);
    }
    EXPECT_EQ(differ, 200);
}

TEST(AgentForward, SingleTicketAgentsAgree) {
    SharedAgentNetwork net(NetworkTopology::mlp(8, {32, 32}, 4), SharingKind::SNP_NPS, 3, parse_schedule("0.5-0.5"), 1, 2);
    const auto out = net.forward(all_agents(3), repeat(Vector::Random(8), 3)).output;
    EXPECT_EQ(out.col(1), out.col(0));
    EXPECT_EQ(out.col(2), out.col(0));
}

TEST(AgentForward, MaskedModesMatchEffectiveParameters) {
    for (auto kind : {SharingKind::SNP_PS, SharingKind::USNP_PS, SharingKind::SNP_PS_id}) {
        SharedAgentNetwork net(NetworkTopology::mlp(6, {12, 10}, 3, Activation::tanh), kind, 3,
                               parse_schedule("0.25-0.5"), 3, 4);
        const Matrix x = Matrix::Random(6, 3);
        const auto out = net.forward(all_agents(3), x).output;
        for (std::size_t i = 0; i < 3; ++i) {
            Vector xi = x.col(static_cast<Eigen::Index>(i));
            if (net.mode().one_hot()) {
                xi.conservativeResize(9);
                xi.tail(3).setZero();
                xi[6 + static_cast<Eigen::Index>(i)] = 1.0;
            }
            const auto ref = netcore::forward(net.effective_parameters(i), net.topology(), Matrix(xi));
            EXPECT_LT((ref.output.col(0) - out.col(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(AgentForward, GroupedUsesClusterRoots) {
    SharedAgentNetwork net(NetworkTopology::mlp(6, {16}, 3), SharingMode::grouped({0, 1, 0, 1}), 4, {}, 1, 2);
    ASSERT_EQ(net.roots().size(), 2u);
    const auto out = net.forward(all_agents(4), repeat(Vector::Random(6), 4)).output;
    EXPECT_EQ(out.col(2), out.col(0));
    EXPECT_EQ(out.col(3), out.col(1));
    EXPECT_NE(out.col(1), out.col(0));
}

TEST(AgentForward, Errors) {
    SharedAgentNetwork net(NetworkTopology::mlp(6, {16}, 3), SharingKind::FuPS, 2, {}, 1, 2);
    EXPECT_THROW(net.agent_forward(2, Vector::Zero(6)), UsageError);
    EXPECT_THROW(net.agent_forward(0, Vector::Zero(5)), UsageError);
    EXPECT_THROW(SharedAgentNetwork(NetworkTopology::mlp(6, {16}, 3), SharingMode::grouped({0, 2}), 2, {}, 1, 2),
                 ConfigError);
    EXPECT_THROW(SharedAgentNetwork(NetworkTopology::mlp(6, {16}, 3), SharingMode::grouped({0}), 2, {}, 1, 2),
                 ConfigError);
}

TEST(OneHot, InputWidenedByN) {
    SharedAgentNetwork net(NetworkTopology::mlp(6, {16}, 3), SharingKind::FuPS_id, 5, {}, 1, 2);
    EXPECT_EQ(net.topology().input_width(), 11u);
    EXPECT_EQ(net.observation_width(), 6u);
}

TEST(OneHot, OnlyFirstPreactivationDependsOnId) {
    SharedAgentNetwork net(NetworkTopology::mlp(6, {16, 16}, 3), SharingKind::FuPS_id, 3, {}, 1, 2);
    const Vector x = Vector::Random(6);
    const auto r = net.forward(all_agents(3), repeat(x, 3));
    const auto& pre = r.trace.parts[0].trace.layers[0].pre;
    const auto& w = net.roots()[0].layers[0].weight;
    for (Eigen::Index i = 1; i < 3; ++i)
        EXPECT_LT(((pre.col(i) - pre.col(0)) - (w.col(6 + i) - w.col(6))).cwiseAbs().maxCoeff(), 1e-12);
    net.roots()[0].layers[0].weight.rightCols(3).setZero();
    const auto out = net.forward(all_agents(3), repeat(x, 3)).output;
    EXPECT_EQ(out.col(1), out.col(0));
    EXPECT_EQ(out.col(2), out.col(0));
}

TEST(OneHot, SnpIdMasksLeaveInputsAlone) {
    SharedAgentNetwork net(NetworkTopology::mlp(6, {16}, 3), SharingKind::SNP_PS_id, 3, parse_schedule("0.5"), 1, 2);
    const auto w = pruning::expand_to_weight_mask((*net.neuron_masks())[0], net.topology());
    // Input columns are never zeroed as a whole.
    for (Eigen::Index c = 0; c < 9; ++c) EXPECT_FALSE(w.layers[0].weight.col(c).isZero(0.0));
}

TEST(Gradients, BatchedMatchesExplicitReplication) {
    for (const auto& topo : {NetworkTopology::mlp(5, {8, 6}, 3, Activation::tanh),
                             NetworkTopology::recurrent(5, 8, 6, 3)}) {
        for (auto kind : {SharingKind::SNP_PS, SharingKind::USNP_PS}) {
            SharedAgentNetwork net(topo, kind, 3, parse_schedule("0.25-0.5"), 11, 12);
            const Matrix x = Matrix::Random(5, 3), dy = Matrix::Random(3, 3);
            auto batched = net.backward(net.forward(all_agents(3), x).trace, dy);
            net.normalize(batched);

            std::vector<GradientStore> per_agent;
            for (std::size_t i = 0; i < 3; ++i) {
                const auto eff = net.effective_parameters(i);
                const auto col = static_cast<Eigen::Index>(i);
                auto fr = netcore::forward(eff, topo, Matrix(x.col(col)));
                auto g = netcore::backward(eff, topo, fr.trace, Matrix(dy.col(col)));
                g.multiply(net.neuron_masks() ? pruning::expand_to_weight_mask((*net.neuron_masks())[i], topo)
                                              : (*net.weight_masks())[i]);
                per_agent.push_back(g);
            }
            const auto acc = net.accumulate_agent_gradients(per_agent);
            Vector oracle = Vector::Zero(static_cast<Eigen::Index>(acc[0].size()));
            for (const auto& g : per_agent) oracle += g.flatten() / 3.0;
            EXPECT_LT((acc[0].flatten() - oracle).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LT((batched[0].flatten() - oracle).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(Gradients, SingleOwnerGetsOneNth) {
    const auto topo = NetworkTopology::mlp(3, {4}, 2);
    SharedAgentNetwork net(topo, SharingKind::SNP_PS, 3, parse_schedule("0.25"), 1, 2);
    pruning::NeuronMaskGroup g;
    g.schedule = net.schedule();
    g.topology_hash = topo.hash();
    g.masks = {{{{1, 1, 1, 0}}}, {{{0, 1, 1, 1}}}, {{{0, 1, 1, 1}}}};
    net.set_neuron_masks(g);
    std::vector<GradientStore> per_agent;
    for (std::size_t i = 0; i < 3; ++i) {
        auto gi = GradientStore::zeros_like(net.roots()[0]);
        for (auto& l : gi.layers) l.weight.setConstant(static_cast<double>(i + 1));
        gi.multiply(pruning::expand_to_weight_mask(g[i], topo));
        per_agent.push_back(gi);
    }
    const auto root = net.accumulate_agent_gradients(per_agent);
    EXPECT_TRUE(root[0].layers[0].weight.row(0).isConstant(1.0 / 3.0, 0.0));
    EXPECT_TRUE(root[0].layers[0].weight.row(1).isConstant(2.0, 1e-15));
    EXPECT_TRUE(root[0].layers[0].weight.row(3).isConstant(5.0 / 3.0, 1e-15));
}

TEST(Gradients, EqualGradientsAverageToThemselves) {
    SharedAgentNetwork net(NetworkTopology::mlp(3, {4}, 2), SharingKind::FuPS, 4, {}, 1, 2);
    auto g = GradientStore::zeros_like(net.roots()[0]);
    for (auto& l : g.layers) l.weight.setConstant(0.7);
    const auto root = net.accumulate_agent_gradients(std::vector<GradientStore>(4, g));
    EXPECT_TRUE(root[0].layers[1].weight.isConstant(0.7, 1e-15));
}

TEST(Gradients, GroupedAveragesWithinCluster) {
    SharedAgentNetwork net(NetworkTopology::mlp(3, {4}, 2), SharingMode::grouped({0, 0, 0, 1}), 4, {}, 1, 2);
    std::vector<GradientStore> per_agent;
    for (std::size_t i = 0; i < 4; ++i) {
        auto g = GradientStore::zeros_like(net.roots()[net.root_of(i)]);
        g.layers[0].bias.setConstant(static_cast<double>(i));
        per_agent.push_back(g);
    }
    const auto root = net.accumulate_agent_gradients(per_agent);
    EXPECT_TRUE(root[0].layers[0].bias.isConstant(1.0, 1e-15));
    EXPECT_TRUE(root[1].layers[0].bias.isConstant(3.0, 1e-15));
}

TEST(Gradients, ShapeMismatchRejected) {
    SharedAgentNetwork net(NetworkTopology::mlp(3, {4}, 2), SharingKind::FuPS, 2, {}, 1, 2);
    auto bad = GradientStore::zeros_like(netcore::init_parameters(NetworkTopology::mlp(3, {5}, 2), 0));
    EXPECT_THROW(net.accumulate_agent_gradients({bad, bad}), UsageError);
    EXPECT_THROW(net.accumulate_agent_gradients({bad}), UsageError);
}

TEST(Masks, PermanentUnderTraining) {
    const auto topo = NetworkTopology::recurrent(5, 8, 6, 3);
    for (auto kind : {SharingKind::SNP_PS, SharingKind::USNP_PS}) {
        SharedAgentNetwork net(topo, kind, 2, parse_schedule("0.5-0.5"), 1, 2);
        const auto before = net.roots()[0];
        netcore::Optimizer opt{netcore::OptimizerConfig{}};
        for (int it = 0; it < 30; ++it) {
            auto r = net.forward(all_agents(2), Matrix::Random(5, 2));
            auto g = net.backward(r.trace, r.output);  // loss 0.5 |y|^2
            net.normalize(g);
            ParameterStore* ps[] = {&net.roots()[0]};
            GradientStore* gs[] = {&g[0]};
            opt.step(ps, gs);
        }
        // Positions masked for every agent never move.
        auto mask_of = [&](std::size_t i) {
            return net.neuron_masks() ? pruning::expand_to_weight_mask((*net.neuron_masks())[i], topo)
                                      : (*net.weight_masks())[i];
        };
        const auto m0 = mask_of(0).flatten(), m1 = mask_of(1).flatten();
        const auto now = net.roots()[0].flatten(), was = before.flatten();
        std::size_t frozen = 0;
        for (Eigen::Index k = 0; k < now.size(); ++k)
            if (m0[k] == 0.0 && m1[k] == 0.0) {
                EXPECT_EQ(now[k], was[k]);
                ++frozen;
            }
        EXPECT_GT(frozen, 0u);
        for (std::size_t i = 0; i < 2; ++i) {
            const auto eff = net.effective_parameters(i).flatten();
            const auto m = mask_of(i).flatten();
            for (Eigen::Index k = 0; k < eff.size(); ++k)
                if (m[k] == 0.0) { EXPECT_EQ(eff[k], 0.0); }
        }
        EXPECT_NE(now, was);
    }
}

TEST(ParameterCount, MatchesShapeProducts) {
    for (const auto& topo : {kLbfTopo, NetworkTopology::recurrent(30, 64, 64, 9)}) {
        SharedAgentNetwork net(topo, SharingKind::FuPS, 6, {}, 1, 2);
        EXPECT_EQ(net.parameter_count().trainable, shape_product_count(topo));
    }
}

TEST(ParameterCount, ModeOrdering) {
    const auto n = 6;
    auto count = [&](SharingMode m) {
        return SharedAgentNetwork(kLbfTopo, m, n, parse_schedule("0-0.1-0.1"), 1, 2).parameter_count().trainable;
    };
    const auto fups = count(SharingKind::FuPS), snp = count(SharingKind::SNP_PS), id = count(SharingKind::FuPS_id);
    const auto grouped = count(SharingMode::grouped({0, 0, 1, 1, 2, 2}));
    EXPECT_EQ(snp, fups);
    EXPECT_EQ(id - fups, 768u);
    EXPECT_EQ(grouped, 3 * fups);
    EXPECT_LT(fups, id);
    EXPECT_LT(id, grouped);
    EXPECT_EQ(SharedAgentNetwork(kLbfTopo, SharingKind::FuPS_id, n, {}, 1, 2).parameter_count().one_hot_weights, 768u);
}

TEST(Features, FuPSRowsIdentical) {
    SharedAgentNetwork net(NetworkTopology::mlp(6, {8, 8}, 3), SharingKind::FuPS, 3, {}, 1, 2);
    const auto d = dump_hidden_features(net, Vector::Random(6), {0, 1, 2});
    ASSERT_EQ(d.records.size(), 6u);
    for (const auto& r : d.records) {
        EXPECT_EQ(r.values.size(), 8);
        EXPECT_EQ(r.values, d.records[r.layer].values);
    }
}

TEST(Features, PrunedPositionsAreZero) {
    SharedAgentNetwork net(NetworkTopology::mlp(6, {8, 8}, 3), SharingKind::SNP_PS, 3, parse_schedule("0.5-0.5"), 1, 2);
    const auto d = dump_hidden_features(net, Vector::Random(6), {0, 1, 2});
    for (const auto& r : d.records)
        for (std::size_t j = 0; j < 8; ++j)
            if (!(*net.neuron_masks())[r.agent].layers[r.layer][j]) { EXPECT_EQ(r.values[static_cast<Eigen::Index>(j)], 0.0); }
}

TEST(Features, JointlyKeptFirstLayerValuesAgree) {
    SharedAgentNetwork net(NetworkTopology::mlp(6, {16, 8}, 3), SharingKind::SNP_PS, 2, parse_schedule("0.5-0.5"), 1, 2);
    const auto d = dump_hidden_features(net, Vector::Random(6), {0, 1});
    const auto& m = *net.neuron_masks();
    std::size_t shared = 0;
    for (std::size_t j = 0; j < 16; ++j)
        if (m[0].layers[0][j] && m[1].layers[0][j]) {
            ++shared;
            EXPECT_EQ(d.records[0].values[static_cast<Eigen::Index>(j)], d.records[2].values[static_cast<Eigen::Index>(j)]);
        }
    EXPECT_GT(shared, 0u);
}

TEST(Features, CsvLayout) {
    SharedAgentNetwork net(NetworkTopology::mlp(2, {3}, 1), SharingKind::FuPS, 2, {}, 1, 2);
    std::ostringstream os;
    write_feature_csv_header(os);
    write_feature_csv(os, "r1", dump_hidden_features(net, Vector::Ones(2), {0, 1}, 7));
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "run_id,step,agent,layer,neuron,value");
    int rows = 0;
    while (std::getline(is, line)) {
        EXPECT_EQ(line.rfind("r1,7,", 0), 0u);
        ++rows;
    }
    EXPECT_EQ(rows, 6);
}

TEST(Checkpoint, RoundTripEveryMode) {
    const auto topo = NetworkTopology::recurrent(5, 8, 6, 3);
    for (auto mode : {SharingMode(SharingKind::FuPS), SharingMode(SharingKind::FuPS_id), SharingMode(SharingKind::SNP_PS),
                      SharingMode(SharingKind::SNP_PS_id), SharingMode(SharingKind::USNP_PS),
                      SharingMode(SharingKind::SNP_NPS), SharingMode::grouped({1, 0, 1})}) {
        SharedAgentNetwork net(topo, mode, 3, parse_schedule("0.25-0.5"), 5, 6);
        std::stringstream ss;
        save_shared(ss, net, "run-x");
        const auto back = load_shared(ss);
        EXPECT_EQ(back.run_id, "run-x");
        EXPECT_EQ(back.net.mode(), mode);
        const Matrix x = Matrix::Random(5, 3);
        EXPECT_EQ(back.net.forward(all_agents(3), x).output, net.forward(all_agents(3), x).output) << mode.name();
    }
}
