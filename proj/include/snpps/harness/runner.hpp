#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "snpps/envs/replay_log.hpp"
#include "snpps/harness/config.hpp"
#include "snpps/maa2c/trainer.hpp"
#include "snpps/netcore/checkpoint.hpp"
#include "snpps/pruning/mask_io.hpp"
#include "snpps/qmix/trainer.hpp"
#include "snpps/sharednet/shared_checkpoint.hpp"

namespace snpps::harness {

namespace fs = std::filesystem;

struct CurvePoint {
    std::size_t step = 0;
    double mean_return = 0.0;
};

struct RunRecord {
    std::string config_hash;
    Seed seed = 0;
    std::vector<CurvePoint> curve;
    double final_return = 0.0;
    std::size_t steps = 0;
    double ms_per_1000_steps = 0.0;  // training only, evaluation excluded
    fs::path dir;
};

struct ParameterSummary {
    sharednet::ParameterCount actor;   // qmix: the utility network
    sharednet::ParameterCount critic;  // a2c only
    std::size_t mixer = 0;             // qmix only
    std::size_t total() const { return actor.trainable + critic.trainable + mixer; }
};

struct RunOptions {
    bool write_checkpoints = true;
    std::function<void(const std::string&)> log;  // progress lines, may be empty
};

struct Stats {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
    double se = 0.0;      // standard error of the mean
};

inline Stats summarize(const std::vector<double>& xs) {
    Stats s;
    if (xs.empty()) return s;
    const double n = static_cast<double>(xs.size());
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / (n - 1.0));
        s.se = s.stddev / std::sqrt(n);
    }
    return s;
}

/// Shortest round-trip text for a double, so reruns reproduce files byte for byte.
inline std::string num(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline std::string run_id(const std::string& hash, Seed seed) { return hash + "-s" + std::to_string(seed); }

inline std::string provenance(const std::string& hash, Seed seed) {
    return "# config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
}

/// Seeds of the named substreams of one run.
struct RunSeeds {
    Seed env, eval_env, exploration, actor_init, actor_masks, critic_init, critic_masks, learner;

    RunSeeds(const ExperimentConfig& c, Seed s)
        : env(derive_seed(s, "env")),
          // the coordination game's seed is the task itself, so evaluation must share it
          eval_env(c.env.kind == "coord" ? env : derive_seed(s, "eval-env")),
          exploration(derive_seed(s, "exploration")),
          actor_init(derive_seed(s, "init-actor")),
          actor_masks(derive_seed(s, "masks-actor")),
          critic_init(derive_seed(s, "init-critic")),
          critic_masks(derive_seed(s, "masks-critic")),
          learner(derive_seed(s, "learner")) {}
};

inline std::size_t observation_width(const EnvSpec& e) {
    return e.kind == "coord" ? e.coord.observation_width : e.lbf.observation_width();
}
inline std::size_t state_width(const EnvSpec& e) {
    return e.kind == "coord" ? e.coord.observation_width : e.lbf.state_width();
}
inline std::size_t action_count(const EnvSpec& e) {
    return e.kind == "coord" ? e.coord.n_actions : static_cast<std::size_t>(envs::kLbfActionCount);
}

inline sharednet::SharedAgentNetwork build_network(const ExperimentConfig& c, const netcore::NetworkTopology& base,
                                                   const std::string& schedule, Seed init, Seed masks) {
    return sharednet::SharedAgentNetwork(base, c.mode, c.env.n_agents(),
                                         schedule.empty() ? pruning::PruningSchedule() : pruning::parse_schedule(schedule),
                                         init, masks);
}

inline maa2c::A2cTrainer build_a2c(const ExperimentConfig& c, const RunSeeds& rs) {
    const auto obs = observation_width(c.env);
    auto actor = build_network(c, netcore::NetworkTopology::mlp(obs, c.network.hidden, action_count(c.env)),
                               c.actor_schedule, rs.actor_init, rs.actor_masks);
    auto critic = build_network(c, netcore::NetworkTopology::mlp(obs, c.network.hidden, 1), c.critic_schedule,
                                rs.critic_init, rs.critic_masks);
    return maa2c::A2cTrainer(std::move(actor), std::move(critic), c.a2c);
}

inline qmix::QmixTrainer build_qmix(const ExperimentConfig& c, const RunSeeds& rs) {
    auto util = build_network(c,
                              netcore::NetworkTopology::recurrent(observation_width(c.env), c.network.pre_width,
                                                                  c.network.gru_width, action_count(c.env)),
                              c.actor_schedule, rs.actor_init, rs.actor_masks);
    return qmix::QmixTrainer(std::move(util), state_width(c.env), c.qmix, rs.learner);
}

inline ParameterSummary parameter_summary(const ExperimentConfig& c) {
    const RunSeeds rs(c, c.seeds.front());
    ParameterSummary p;
    if (c.algorithm == Algorithm::a2c) {
        const auto tr = build_a2c(c, rs);
        p.actor = tr.actor().parameter_count();
        p.critic = tr.critic().parameter_count();
    } else {
        const auto tr = build_qmix(c, rs);
        p.actor = tr.utilities().parameter_count();
        p.mixer = tr.mixer().parameter_count();
    }
    return p;
}

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

inline void write_text(const fs::path& p, const std::string& text) {
    auto os = open_out(p);
    os << text;
}

inline void save_network(const fs::path& dir, const std::string& role, const sharednet::SharedAgentNetwork& net,
                         const std::string& id, const std::string& hash, Seed seed) {
    {
        auto os = open_out(dir / (role + ".ckpt"));
        sharednet::save_shared(os, net, id);
    }
    if (net.neuron_masks() || net.weight_masks()) {
        auto os = open_out(dir / (role + ".masks"));
        os << provenance(hash, seed);
        if (net.neuron_masks())
            pruning::save_masks(os, *net.neuron_masks());
        else
            pruning::save_masks(os, *net.weight_masks());
    }
}

// Wraps an LBF environment and mirrors every reset and step into a replay log.
class RecordingLbf final : public envs::Environment {
public:
    RecordingLbf(envs::LbfEnv& env, std::ostream& os) : env_(env), writer_(os) {}
    std::size_t n_agents() const override { return env_.n_agents(); }
    std::size_t observation_width() const override { return env_.observation_width(); }
    std::size_t state_width() const override { return env_.state_width(); }
    std::size_t action_count() const override { return env_.action_count(); }
    envs::Reset reset() override {
        auto r = env_.reset();
        writer_.begin_episode(env_.config(), env_.state());
        return r;
    }
    envs::Step step(std::span<const int> actions) override {
        auto s = env_.step(actions);
        writer_.step(env_.state().t, actions, s.rewards, s.done);
        return s;
    }

private:
    envs::LbfEnv& env_;
    envs::ReplayLogWriter writer_;
};

}  // namespace detail

/// Trains one seed, writing curve.csv, train_log.csv, timing.json and the
/// final checkpoints into `dir`. Curve rows are flushed as they are produced,
/// so a numeric failure leaves the partial curve behind.
inline RunRecord run_seed(const ExperimentConfig& c, Seed seed, const fs::path& dir, const RunOptions& opt = {}) {
    using clock = std::chrono::steady_clock;
    fs::create_directories(dir);
    const std::string hash = c.hash();
    const RunSeeds rs(c, seed);
    RunRecord rec;
    rec.config_hash = hash;
    rec.seed = seed;
    rec.dir = dir;

    auto curve = detail::open_out(dir / "curve.csv");
    curve << provenance(hash, seed) << "step,mean_return\n";
    auto log = detail::open_out(dir / "train_log.csv");
    log << provenance(hash, seed);

    auto env = make_env(c.env, rs.env);
    double train_seconds = 0.0, eval_seconds = 0.0;

    auto write_timing = [&](const std::string& status, const std::string& error) {
        json t{{"config_hash", hash},
               {"seed", seed},
               {"status", status},
               {"steps", rec.steps},
               {"train_seconds", train_seconds},
               {"eval_seconds", eval_seconds},
               {"ms_per_1000_steps", rec.ms_per_1000_steps}};
        if (!error.empty()) t["error"] = error;
        detail::write_text(dir / "timing.json", t.dump(2) + "\n");
    };

    auto record_eval = [&](std::size_t step, double ret) {
        rec.curve.push_back({step, ret});
        curve << step << ',' << num(ret) << '\n' << std::flush;
        if (opt.log) opt.log("seed " + std::to_string(seed) + " step " + std::to_string(step) + " return " + num(ret));
    };

    std::ofstream replay;
    auto evaluate = [&](auto&& eval_fn, bool final_point) {
        const auto t0 = clock::now();
        auto eval_env = make_env(c.env, rs.eval_env);
        double r;
        if (final_point && c.env.replay_log && c.env.kind == "lbf") {  // the final evaluation episodes
            replay = detail::open_out(dir / "replay.jsonl");
            detail::RecordingLbf rec_env(static_cast<envs::LbfEnv&>(*eval_env), replay);
            r = eval_fn(rec_env);
        } else {
            r = eval_fn(*eval_env);
        }
        eval_seconds += std::chrono::duration<double>(clock::now() - t0).count();
        return r;
    };

    try {
        if (c.algorithm == Algorithm::a2c) {
            auto trainer = build_a2c(c, rs);
            maa2c::Collector collector(*env, rs.exploration);
            auto eval_fn = [&](envs::Environment& e) { return maa2c::evaluate_greedy(trainer, e, c.eval_episodes); };
            log << "step,episode";
            for (std::size_t i = 0; i < c.env.n_agents(); ++i) log << ",return_agent" << i;
            log << ",team_return,policy_loss,value_loss,entropy\n";

            std::size_t episode = 0, next_eval = 0;
            std::vector<maa2c::EpisodeStats> finished;
            while (true) {
                const bool last = rec.steps >= c.total_steps;
                if (last || rec.steps >= next_eval) {
                    record_eval(rec.steps, evaluate(eval_fn, last));
                    while (next_eval <= rec.steps) next_eval += c.eval_interval;
                }
                if (last) break;
                const auto t0 = clock::now();
                finished.clear();
                const auto seg = collector.collect(trainer, std::min(c.a2c.n_steps, c.total_steps - rec.steps), finished);
                const auto st = trainer.update(seg);
                train_seconds += std::chrono::duration<double>(clock::now() - t0).count();
                rec.steps += seg.steps();
                for (const auto& ep : finished) {
                    log << rec.steps << ',' << episode++;
                    for (double r : ep.agent_returns) log << ',' << num(r);
                    log << ',' << num(ep.team_return) << ',' << num(st.policy_loss) << ',' << num(st.value_loss) << ','
                        << num(st.entropy) << '\n';
                }
            }
            if (opt.write_checkpoints) {
                detail::save_network(dir, "actor", trainer.actor(), run_id(hash, seed), hash, seed);
                detail::save_network(dir, "critic", trainer.critic(), run_id(hash, seed), hash, seed);
            }
        } else {
            auto trainer = build_qmix(c, rs);
            auto eval_fn = [&](envs::Environment& e) { return trainer.evaluate_greedy(e, c.eval_episodes); };
            log << "step,episode,return,loss,epsilon\n";
            std::size_t episode = 0, next_eval = 0;
            while (true) {
                const bool last = rec.steps >= c.total_steps;
                if (last || rec.steps >= next_eval) {
                    record_eval(rec.steps, evaluate(eval_fn, last));
                    while (next_eval <= rec.steps) next_eval += c.eval_interval;
                }
                if (last) break;
                const auto t0 = clock::now();
                const auto st = trainer.train_episode(*env);
                train_seconds += std::chrono::duration<double>(clock::now() - t0).count();
                rec.steps = trainer.env_steps();
                const double loss = st.losses.empty() ? 0.0
                                                      : std::accumulate(st.losses.begin(), st.losses.end(), 0.0) /
                                                            static_cast<double>(st.losses.size());
                log << rec.steps << ',' << episode++ << ',' << num(st.team_return) << ','
                    << (st.losses.empty() ? std::string() : num(loss)) << ',' << num(st.epsilon) << '\n';
            }
            if (opt.write_checkpoints) {
                detail::save_network(dir, "utility", trainer.utilities(), run_id(hash, seed), hash, seed);
                auto os = detail::open_out(dir / "mixer.ckpt");
                os << provenance(hash, seed);
                for (std::size_t k = 0; k < qmix::kMixerParts; ++k)
                    netcore::save_parameters(os, trainer.mixer().topology(k), trainer.mixer().params()[k]);
            }
        }
    } catch (const std::exception& e) {
        log.flush();
        write_timing("failed", e.what());
        throw;
    }

    rec.final_return = rec.curve.back().mean_return;
    rec.ms_per_1000_steps = rec.steps ? 1e6 * train_seconds / static_cast<double>(rec.steps) : 0.0;
    write_timing("ok", "");
    return rec;
}

inline json count_json(const sharednet::ParameterCount& p) {
    return {{"trainable", p.trainable},
            {"per_network", p.per_network},
            {"networks", p.networks},
            {"one_hot_weights", p.one_hot_weights}};
}

/// One run per seed under c.output_dir (or `out` when given).
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& c, const RunOptions& opt = {}, fs::path out = {}) {
    if (out.empty()) out = c.output_dir;
    fs::create_directories(out);
    const std::string hash = c.hash();
    detail::write_text(out / "config.json", c.source.empty() ? c.to_json().dump(2) + "\n" : c.source);

    std::vector<RunRecord> recs;
    for (Seed s : c.seeds) recs.push_back(run_seed(c, s, out / ("seed_" + std::to_string(s)), opt));

    auto summary = detail::open_out(out / "summary.csv");
    summary << "# config_hash=" << hash << " seeds=";
    for (std::size_t k = 0; k < c.seeds.size(); ++k) summary << (k ? ";" : "") << c.seeds[k];
    summary << "\nseed,final_return,steps\n";
    std::vector<double> finals, ms;
    json per_seed = json::array();
    for (const auto& r : recs) {
        summary << r.seed << ',' << num(r.final_return) << ',' << r.steps << '\n';
        finals.push_back(r.final_return);
        ms.push_back(r.ms_per_1000_steps);
        per_seed.push_back({{"seed", r.seed}, {"final_return", r.final_return}, {"ms_per_1000_steps", r.ms_per_1000_steps}});
    }
    const auto st = summarize(finals);
    const auto params = parameter_summary(c);
    json params_j{{"actor", count_json(params.actor)}, {"total", params.total()}};
    if (c.algorithm == Algorithm::a2c) params_j["critic"] = count_json(params.critic);
    if (c.algorithm == Algorithm::qmix) params_j["mixer"] = params.mixer;
    json run{{"config_hash", hash},
             {"name", c.name},
             {"algorithm", std::string(to_string(c.algorithm))},
             {"mode", c.mode.name()},
             {"actor_schedule", c.actor_schedule},
             {"critic_schedule", c.critic_schedule},
             {"seeds", per_seed},
             {"mean_final_return", st.mean},
             {"std_final_return", st.stddev},
             {"se_final_return", st.se},
             {"mean_ms_per_1000_steps", summarize(ms).mean},
             {"parameters", params_j}};
    detail::write_text(out / "run.json", run.dump(2) + "\n");
    return recs;
}

}  // namespace snpps::harness
