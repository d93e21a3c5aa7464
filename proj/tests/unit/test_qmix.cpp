#include <cmath>
#include <cstring>
#include <set>

#include <gtest/gtest.h>

#include "oracles/finite_difference.hpp"
#include "snpps/envs/coord_game.hpp"
#include "snpps/qmix/trainer.hpp"

using namespace snpps;
using namespace snpps::qmix;
using netcore::Activation;
using netcore::LayerKind;
using netcore::NetworkTopology;
using sharednet::SharingKind;
using sharednet::SharingMode;

namespace {

// GRU utility with smooth activations so finite differences never straddle a kink.
NetworkTopology smooth_recurrent(std::size_t obs, std::size_t actions) {
    return NetworkTopology({{LayerKind::dense, obs, 5, Activation::tanh},
                            {LayerKind::gru, 5, 4, Activation::identity},
                            {LayerKind::dense, 4, actions, Activation::identity}});
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1, double hi = 1) {
    Matrix m(r, c);
    for (auto& v : m.reshaped()) v = rng.uniform(lo, hi);
    return m;
}

// Smallest distance of any relu pre-activation or hypernetwork output from its kink.
double kink_margin(const MixerTrace& tr) {
    double m = std::min(tr.w1_raw.cwiseAbs().minCoeff(), tr.w2_raw.cwiseAbs().minCoeff());
    for (const auto& h : tr.hyper)
        for (std::size_t k = 0; k + 1 < h.layers.size(); ++k) m = std::min(m, h.layers[k].pre.cwiseAbs().minCoeff());
    return m;
}

// Hypernetworks produce W1 row 0 = 1, b1 = 0, w2 = e_0, V = 0, so Qjt = elu(sum q).
void make_sum_mixer(MixingNetwork& mx) {
    const auto E = static_cast<Eigen::Index>(mx.config().embed_width);
    for (auto& p : mx.params()) p.set_zero();
    auto& w1 = mx.params()[kHyperW1].layers.back().bias;
    for (std::size_t i = 0; i < mx.n_agents(); ++i) w1[static_cast<Eigen::Index>(i) * E] = 1.0;
    mx.params()[kHyperW2].layers.back().bias[0] = 1.0;
}

QmixConfig small_config() {
    QmixConfig c;
    c.mixer.embed_width = 4;
    c.mixer.hyper_width = 5;
    c.batch_size = 2;
    c.min_fill = 2;
    c.buffer_capacity = 50;
    return c;
}

Episode random_episode(std::size_t obs, std::size_t state, std::size_t actions, std::size_t n, std::size_t T, Rng& rng,
                       bool terminal) {
    Episode e;
    for (std::size_t t = 0; t <= T; ++t) {
        e.states.push_back(random_matrix(static_cast<Eigen::Index>(state), 1, rng).col(0));
        e.observations.push_back(random_matrix(static_cast<Eigen::Index>(obs), static_cast<Eigen::Index>(n), rng));
    }
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<int> a(n);
        for (auto& x : a) x = static_cast<int>(rng.uniform_index(actions));
        e.actions.push_back(a);
        e.rewards.push_back(rng.uniform(-1, 1));
    }
    e.terminal = terminal;
    return e;
}

void perturb(SharedAgentNetwork& net, MixingNetwork& mx, Rng& rng, double scale) {
    for (auto& r : net.roots()) {
        Vector v = r.flatten();
        for (auto& x : v) x += rng.uniform(-scale, scale);
        r.unflatten(v);
    }
    for (auto& p : mx.params()) {
        Vector v = p.flatten();
        for (auto& x : v) x += rng.uniform(-scale, scale);
        p.unflatten(v);
    }
}

// One-step task with a constant reward, for the fixed-point check.
class ConstantRewardEnv final : public envs::Environment {
public:
    std::size_t n_agents() const override { return 2; }
    std::size_t observation_width() const override { return 2; }
    std::size_t state_width() const override { return 2; }
    std::size_t action_count() const override { return 3; }
    envs::Reset reset() override {
        done_ = false;
        return {Vector::Ones(2), Matrix::Ones(2, 2)};
    }
    envs::Step step(std::span<const int>) override {
        if (done_) throw UsageError("episode over");
        done_ = true;
        envs::Step s;
        s.state = Vector::Ones(2);
        s.observations = Matrix::Ones(2, 2);
        s.rewards = {0.5, 0.5};
        s.team_reward = 1.0;
        s.done = s.terminal = true;
        return s;
    }

private:
    bool done_ = false;
};

QmixTrainer coord_trainer(SharingMode mode, const std::string& sched, Seed seed, QmixConfig cfg) {
    const auto schedule = sched.empty() ? pruning::PruningSchedule() : pruning::parse_schedule(sched);
    SharedAgentNetwork util(NetworkTopology::recurrent(4, 16, 16, 3), mode, 3, schedule, seed, seed + 1);
    return QmixTrainer(std::move(util), 4, cfg, seed);
}

std::uint64_t checksum(const MixerParams& p) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& s : p) {
        const Vector v = s.flatten();
        for (double x : v) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, sizeof bits);
            h = (h ^ bits) * 1099511628211ull;
        }
    }
    return h;
}

}  // namespace

TEST(Mixer, SumConfigurationAddsUtilities) {
    MixingNetwork mx(3, 2, {}, 1);
    make_sum_mixer(mx);
    Rng rng(2);
    const Matrix q = random_matrix(3, 20, rng, 0.1, 2.0);
    const Vector out = mx.mix(random_matrix(2, 20, rng), q);
    for (Eigen::Index b = 0; b < 20; ++b) EXPECT_NEAR(out[b], q.col(b).sum(), 1e-12);
}

TEST(Mixer, MonotoneInEveryUtility) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        MixingNetwork mx(4, 3, {}, static_cast<Seed>(trial));
        const Matrix s = random_matrix(3, 1, rng, -3, 3);
        const Matrix q = random_matrix(4, 1, rng, -5, 5);
        const double base = mx.mix(s, q)[0];
        for (Eigen::Index i = 0; i < 4; ++i) {
            Matrix up = q;
            up(i, 0) += rng.uniform(1e-3, 2.0);
            EXPECT_GE(mx.mix(s, up)[0], base);
        }
    }
}

TEST(Mixer, NumericalPartialsNonNegative) {
    Rng rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
        MixingNetwork mx(3, 4, {}, static_cast<Seed>(trial));
        const Matrix s = random_matrix(4, 1, rng, -2, 2);
        Matrix q = random_matrix(3, 1, rng, -4, 4);
        MixerTrace tr;
        mx.mix(s, q, &tr);
        const auto back = mx.backward(tr, Vector::Ones(1));
        for (Eigen::Index i = 0; i < 3; ++i) {
            const double keep = q(i, 0);
            q(i, 0) = keep + 1e-5;
            const double up = mx.mix(s, q)[0];
            q(i, 0) = keep - 1e-5;
            const double down = mx.mix(s, q)[0];
            q(i, 0) = keep;
            EXPECT_GE((up - down) / 2e-5, -1e-9);
            EXPECT_GE(back.d_q(i, 0), 0.0);
        }
    }
}

TEST(Mixer, GradientsMatchFiniteDifferences) {
    Rng rng(5);
    int checked = 0;
    for (int trial = 0; checked < 100; ++trial) {
        MixingNetwork mx(3, 4, {6, 5}, static_cast<Seed>(trial));
        const Matrix s = random_matrix(4, 3, rng);
        Matrix q = random_matrix(3, 3, rng, -2, 2);
        const Vector c = random_matrix(3, 1, rng).col(0);
        MixerTrace tr;
        mx.mix(s, q, &tr);
        if (kink_margin(tr) < 1e-3) continue;
        const auto back = mx.backward(tr, c);
        for (std::size_t k = 0; k < kMixerParts; ++k) {
            const Vector theta = mx.params()[k].flatten();
            auto f = [&](const Eigen::VectorXd& v) {
                mx.params()[k].unflatten(v);
                const double l = c.dot(mx.mix(s, q));
                mx.params()[k].unflatten(theta);
                return l;
            };
            EXPECT_LT(oracle::max_relative_error(back.grads[k].flatten(), oracle::central_difference(f, theta)), 1e-4)
                << "trial " << trial << " part " << k;
        }
        const Vector qf = q.reshaped();
        auto fq = [&](const Eigen::VectorXd& v) { return c.dot(mx.mix(s, v.reshaped(3, 3))); };
        EXPECT_LT(oracle::max_relative_error(Vector(back.d_q.reshaped()), oracle::central_difference(fq, qf)), 1e-4);
        ++checked;
    }
}

TEST(Mixer, RejectsShapeMismatch) {
    MixingNetwork mx(3, 2, {}, 1);
    EXPECT_THROW(mx.mix(Matrix::Zero(2, 1), Matrix::Zero(2, 1)), UsageError);
    EXPECT_THROW(mx.mix(Matrix::Zero(3, 1), Matrix::Zero(3, 1)), UsageError);
    EXPECT_THROW(mx.mix(Matrix::Zero(2, 2), Matrix::Zero(3, 1)), UsageError);
}

TEST(TdLoss, ZeroTemporalDifference) {
    // r = 1, gamma = 0.9, target max Qjt = 2, online Qjt = 2.8
    SharedAgentNetwork util(NetworkTopology::recurrent(1, 4, 4, 2), SharingKind::FuPS, 1, {}, 1, 2);
    QmixTrainer tr(std::move(util), 1, {}, 3);
    make_sum_mixer(tr.mixer());
    const Vector target = Vector::Constant(1, 1.0 + 0.9 * 2.0);
    const auto res = tr.mixer_td(Matrix::Ones(1, 1), Matrix::Constant(1, 1, 2.8), target);
    EXPECT_EQ(res.loss, 0.0);
    for (const auto& g : res.mixer_grads) EXPECT_EQ(g.squared_norm(), 0.0);
}

TEST(TdLoss, TerminalDropsBootstrap) {
    Rng rng(6);
    QmixConfig cfg = small_config();
    cfg.gamma = 0.9;
    SharedAgentNetwork util(smooth_recurrent(3, 3), SharingKind::SNP_PS, 2, pruning::parse_schedule("0.2-0.25"), 1, 2);
    QmixTrainer tr(std::move(util), 4, cfg, 3);
    const Episode e = random_episode(3, 4, 3, 2, 1, rng, true);

    Matrix h;
    const Matrix q = tr.utilities_step(e.observations[0], h);
    Matrix chosen(2, 1);
    for (Eigen::Index i = 0; i < 2; ++i) chosen(i, 0) = q(e.actions[0][static_cast<std::size_t>(i)], i);
    const double online = tr.mixer().mix(Matrix(e.states[0]), chosen)[0];

    const Episode* batch[] = {&e};
    const double expect = (online - e.rewards[0]) * (online - e.rewards[0]);
    EXPECT_NEAR(tr.td_loss(batch).loss, expect, 1e-12);

    Episode cut = e;
    cut.terminal = false;  // same step, now a time limit: the bootstrap comes back
    const Episode* batch2[] = {&cut};
    EXPECT_NE(tr.td_loss(batch2).loss, expect);
}

TEST(TdLoss, EmptyBatchRejected) {
    SharedAgentNetwork util(smooth_recurrent(3, 3), SharingKind::FuPS, 2, {}, 1, 2);
    QmixTrainer tr(std::move(util), 4, small_config(), 3);
    std::vector<const Episode*> none;
    EXPECT_THROW(tr.td_loss(none), UsageError);
}

TEST(TdLoss, NonNegative) {
    Rng rng(7);
    SharedAgentNetwork util(smooth_recurrent(3, 3), SharingKind::SNP_PS, 3, pruning::parse_schedule("0.2-0.25"), 1, 2);
    QmixTrainer tr(std::move(util), 4, small_config(), 3);
    for (int k = 0; k < 50; ++k) {
        const Episode e = random_episode(3, 4, 3, 3, 1 + rng.uniform_index(4), rng, k % 2 == 0);
        const Episode* batch[] = {&e};
        EXPECT_GE(tr.td_loss(batch).loss, 0.0);
    }
}

TEST(TdLoss, GradientsMatchFiniteDifferences) {
    Rng rng(8);
    const std::vector<SharingMode> modes{SharingKind::FuPS,    SharingKind::FuPS_id, SharingKind::SNP_PS,
                                         SharingKind::USNP_PS, SharingKind::SNP_NPS, SharingMode::grouped({0, 1, 0})};
    int checked = 0;
    for (int trial = 0; checked < 100; ++trial) {
        const auto& mode = modes[static_cast<std::size_t>(trial) % modes.size()];
        SharedAgentNetwork util(smooth_recurrent(3, 3), mode, 3, pruning::parse_schedule("0.2-0.25"),
                                static_cast<Seed>(trial), static_cast<Seed>(trial) + 7);
        QmixConfig cfg = small_config();
        cfg.gamma = rng.uniform(0.5, 1.0);
        QmixTrainer tr(std::move(util), 4, cfg, static_cast<Seed>(trial));
        perturb(tr.utilities(), tr.mixer(), rng, 0.05);  // online drifts away from the target copy

        std::vector<Episode> eps;
        for (int b = 0; b < 2; ++b) eps.push_back(random_episode(3, 4, 3, 3, 1 + rng.uniform_index(3), rng, b == 0));
        std::vector<const Episode*> batch{&eps[0], &eps[1]};

        // skip draws that sit on a relu or |.| kink of the online mixer
        Matrix states(4, 0);
        for (const auto& e : eps)
            for (std::size_t t = 0; t < e.length(); ++t) {
                states.conservativeResize(4, states.cols() + 1);
                states.col(states.cols() - 1) = e.states[t];
            }
        MixerTrace probe;
        tr.mixer().mix(states, Matrix::Zero(3, states.cols()), &probe);
        if (kink_margin(probe) < 1e-3) continue;

        const auto res = tr.td_loss(batch);
        auto& util_net = tr.utilities();
        for (std::size_t r = 0; r < util_net.roots().size(); ++r) {
            const Vector theta = util_net.roots()[r].flatten();
            auto f = [&](const Eigen::VectorXd& v) {
                util_net.roots()[r].unflatten(v);
                const double l = tr.td_loss(batch).loss;
                util_net.roots()[r].unflatten(theta);
                return l;
            };
            EXPECT_LT(oracle::max_relative_error(res.utility_grads[r].flatten(), oracle::central_difference(f, theta)), 1e-4)
                << "trial " << trial << " mode " << mode.name() << " root " << r;
        }
        for (std::size_t k = 0; k < kMixerParts; ++k) {
            const Vector theta = tr.mixer().params()[k].flatten();
            auto f = [&](const Eigen::VectorXd& v) {
                tr.mixer().params()[k].unflatten(v);
                const double l = tr.td_loss(batch).loss;
                tr.mixer().params()[k].unflatten(theta);
                return l;
            };
            EXPECT_LT(oracle::max_relative_error(res.mixer_grads[k].flatten(), oracle::central_difference(f, theta)), 1e-4)
                << "trial " << trial << " mixer part " << k;
        }
        ++checked;
    }
}

TEST(Select, EpsilonZeroIsArgmaxWithLowTies) {
    Rng rng(9);
    Matrix q(3, 2);
    q << 1, 5, 3, 5, 3, 2;
    EXPECT_EQ(epsilon_greedy(q, 0.0, rng), (std::vector<int>{1, 0}));
    EXPECT_THROW(epsilon_greedy(q, 1.5, rng), UsageError);
}

TEST(Select, EpsilonOneIsUniform) {
    Rng rng(10);
    const Matrix q = Matrix::Zero(5, 3);
    std::vector<std::vector<int>> counts(3, std::vector<int>(5, 0));
    const int draws = 10000;
    for (int k = 0; k < draws; ++k) {
        const auto a = epsilon_greedy(q, 1.0, rng);
        for (std::size_t i = 0; i < 3; ++i) ++counts[i][static_cast<std::size_t>(a[i])];
    }
    const double p = 0.2, sigma = std::sqrt(draws * p * (1 - p));
    for (const auto& row : counts)
        for (int c : row) EXPECT_LT(std::abs(c - draws * p), 4 * sigma);
}

TEST(Buffer, FifoEvictionAndDistinctSamples) {
    ReplayBuffer buf(3);
    for (int k = 0; k < 5; ++k) {
        Episode e;
        e.rewards = {static_cast<double>(k)};
        buf.push(e);
    }
    ASSERT_EQ(buf.size(), 3u);
    EXPECT_EQ(buf[0].rewards[0], 2.0);
    EXPECT_EQ(buf[2].rewards[0], 4.0);
    Rng rng(1);
    for (int k = 0; k < 20; ++k) {
        auto s = buf.sample(3, rng);
        std::set<const Episode*> uniq(s.begin(), s.end());
        EXPECT_EQ(uniq.size(), 3u);
    }
    EXPECT_THROW(buf.sample(4, rng), UsageError);
    EXPECT_THROW(ReplayBuffer(0), ConfigError);
}

TEST(Config, ValidationNamesTheField) {
    QmixConfig c;
    c.gamma = 1.5;
    try {
        c.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "qmix.gamma");
    }
    c = {};
    c.batch_size = 6000;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.mixer.embed_width = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Training, WarmUpTakesNoGradientSteps) {
    QmixConfig cfg;
    cfg.batch_size = 4;
    cfg.min_fill = 10;
    auto tr = coord_trainer(SharingKind::SNP_PS, "0.5-0.5", 1, cfg);
    const auto before = tr.utilities().roots();
    envs::CoordGameEnv env({}, 2);
    for (int k = 0; k < 9; ++k) EXPECT_TRUE(tr.train_episode(env).losses.empty());
    EXPECT_EQ(tr.utilities().roots(), before);
    EXPECT_EQ(tr.buffer().size(), 9u);
    EXPECT_EQ(tr.train_episode(env).losses.size(), 1u);
    EXPECT_NE(tr.utilities().roots(), before);
}

TEST(Training, GammaZeroConstantRewardFixedPoint) {
    QmixConfig cfg;
    cfg.gamma = 0.0;
    cfg.batch_size = 8;
    cfg.min_fill = 8;
    cfg.epsilon_anneal_steps = 200;
    cfg.optimizer.learning_rate = 2e-3;
    SharedAgentNetwork util(NetworkTopology::recurrent(2, 16, 16, 3), SharingKind::SNP_PS, 2,
                            pruning::parse_schedule("0.25-0.25"), 4, 5);
    QmixTrainer tr(std::move(util), 2, cfg, 6);
    ConstantRewardEnv env;
    for (int k = 0; k < 2000; ++k) tr.train_episode(env);

    Matrix h;
    const Matrix q = tr.utilities_step(Matrix::Ones(2, 2), h);
    const Matrix best = q.colwise().maxCoeff().transpose();
    EXPECT_NEAR(tr.mixer().mix(Matrix::Ones(2, 1), best)[0], 1.0, 0.05);
}

TEST(Training, SameSeedSameReturns) {
    QmixConfig cfg;
    cfg.batch_size = 4;
    cfg.min_fill = 4;
    auto a = coord_trainer(SharingKind::SNP_PS, "0.5-0.5", 11, cfg);
    auto b = coord_trainer(SharingKind::SNP_PS, "0.5-0.5", 11, cfg);
    envs::CoordGameEnv ea({}, 3), eb({}, 3);
    for (int k = 0; k < 40; ++k) {
        const auto sa = a.train_episode(ea), sb = b.train_episode(eb);
        EXPECT_EQ(sa.team_return, sb.team_return);
        EXPECT_EQ(sa.losses, sb.losses);
    }
    EXPECT_EQ(a.utilities().roots(), b.utilities().roots());
    EXPECT_EQ(a.mixer(), b.mixer());
}

TEST(Training, TargetsAreStaleSnapshots) {
    QmixConfig cfg;
    cfg.batch_size = 2;
    cfg.min_fill = 2;
    cfg.target_update_interval = 5;
    auto tr = coord_trainer(SharingKind::FuPS, "", 12, cfg);
    envs::CoordGameEnv env({}, 4);
    auto snap_u = tr.utilities().roots();
    auto snap_m = tr.mixer().params();
    for (int k = 0; k < 23; ++k) {
        tr.train_episode(env);
        if (tr.updates() > 0 && tr.updates() % 5 == 0) {
            snap_u = tr.utilities().roots();
            snap_m = tr.mixer().params();
        }
        EXPECT_EQ(tr.target_utilities().roots(), snap_u);
        EXPECT_EQ(tr.target_mixer().params(), snap_m);
    }
    EXPECT_NE(tr.utilities().roots(), tr.target_utilities().roots());
}

TEST(Training, MixerUpdateIndependentOfSharingMode) {
    QmixConfig cfg;
    auto fups = coord_trainer(SharingKind::FuPS, "", 13, cfg);
    auto snp = coord_trainer(SharingKind::SNP_PS, "0.5-0.5", 13, cfg);
    auto usnp = coord_trainer(SharingKind::USNP_PS, "0.5-0.5", 13, cfg);
    ASSERT_EQ(fups.mixer(), snp.mixer());

    Rng rng(14);
    const Matrix states = random_matrix(4, 16, rng), q = random_matrix(3, 16, rng);
    const Vector y = random_matrix(16, 1, rng).col(0);
    std::vector<std::uint64_t> sums;
    for (auto* tr : {&fups, &snp, &usnp}) {
        auto r = tr->mixer_td(states, q, y);
        auto params = tr->mixer().params();
        for (std::size_t k = 0; k < kMixerParts; ++k) {
            netcore::OptimizerState st;
            netcore::apply_update(params[k], r.mixer_grads[k], st, cfg.optimizer);
        }
        sums.push_back(checksum(params));
    }
    EXPECT_EQ(sums[0], sums[1]);
    EXPECT_EQ(sums[0], sums[2]);
    EXPECT_NE(checksum(fups.mixer().params()), sums[0]);
}
