#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "snpps/envs/coord_game.hpp"
#include "snpps/envs/lbf.hpp"
#include "snpps/errors.hpp"
#include "snpps/maa2c/trainer.hpp"
#include "snpps/pruning/mask_io.hpp"
#include "snpps/qmix/trainer.hpp"
#include "snpps/rng.hpp"
#include "snpps/sharednet/sharing_mode.hpp"

namespace snpps::harness {

using json = nlohmann::json;

enum class Algorithm { a2c, qmix };

inline std::string_view to_string(Algorithm a) { return a == Algorithm::a2c ? "a2c" : "qmix"; }

struct EnvSpec {
    std::string kind = "lbf";  // lbf | coord
    std::string preset = "LBF1-desk";  // lbf only: base values that the explicit fields override
    envs::LbfConfig lbf = envs::lbf_preset("LBF1-desk");
    envs::CoordGameConfig coord;
    bool replay_log = false;  // lbf only: write the final evaluation episodes as JSON lines

    std::size_t n_agents() const { return kind == "lbf" ? lbf.n_agents() : coord.n_agents; }
};

struct NetworkSpec {
    std::vector<std::size_t> hidden{128, 128, 128};  // a2c actor and critic
    std::size_t pre_width = 64;                      // qmix utility: dense -> gru -> dense
    std::size_t gru_width = 64;
};

struct ExperimentConfig {
    std::string name = "experiment";
    EnvSpec env;
    Algorithm algorithm = Algorithm::a2c;
    sharednet::SharingMode mode;
    std::string actor_schedule;   // qmix: the utility network
    std::string critic_schedule;  // a2c only
    NetworkSpec network;
    std::vector<Seed> seeds{1};
    std::size_t total_steps = 200000;
    std::size_t eval_interval = 10000;
    std::size_t eval_episodes = 20;
    std::string output_dir = "runs/experiment";
    maa2c::A2cConfig a2c;
    qmix::QmixConfig qmix;

    std::string source;  // the text this config was parsed from, echoed into every run directory

    json to_json() const;
    /// Hash of the normalized config (independent of formatting and key order).
    /// Seeds and output location are left out: they say which runs to make and
    /// where, not what is being run.
    std::string hash() const {
        auto j = to_json();
        j.erase("seeds");
        j.erase("output_dir");
        return pruning::detail::hex64(::snpps::detail::fnv1a(j.dump()));
    }
};

namespace detail {

inline std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
}

inline void check_object(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ConfigError(path.empty() ? "config" : path, "expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(join(path, key), "unknown key");
    }
}

template <class T>
T convert(const json& v, const std::string& path) {
    try {
        if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t> || std::is_same_v<T, int>) {
            if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
            if constexpr (!std::is_same_v<T, int>)
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
                    throw ConfigError(path, "must be non-negative");
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ConfigError(path, "expected a number");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(path, "expected a string");
        }
        return v.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path, e.what());
    }
}

template <class T>
void read(const json& j, const std::string& path, std::string_view key, T& out) {
    const auto it = j.find(std::string(key));
    if (it != j.end()) out = convert<T>(*it, join(path, key));
}

template <class T>
void read_list(const json& j, const std::string& path, std::string_view key, std::vector<T>& out) {
    const auto it = j.find(std::string(key));
    if (it == j.end()) return;
    const auto p = join(path, key);
    if (!it->is_array()) throw ConfigError(p, "expected a list");
    out.clear();
    for (std::size_t k = 0; k < it->size(); ++k) out.push_back(convert<T>((*it)[k], p + "[" + std::to_string(k) + "]"));
}

inline netcore::OptimizerKind parse_optimizer(const std::string& s, const std::string& path) {
    if (s == "rmsprop") return netcore::OptimizerKind::rmsprop;
    if (s == "sgd") return netcore::OptimizerKind::sgd;
    throw ConfigError(path, "unknown optimizer '" + s + "' (rmsprop or sgd)");
}

inline void read_optimizer(const json& j, const std::string& path, netcore::OptimizerConfig& o) {
    read(j, path, "learning_rate", o.learning_rate);
    read(j, path, "rms_decay", o.decay);
    read(j, path, "rms_epsilon", o.epsilon);
    read(j, path, "clip_norm", o.clip_norm);
    std::string kind = o.kind == netcore::OptimizerKind::sgd ? "sgd" : "rmsprop";
    read(j, path, "optimizer", kind);
    o.kind = parse_optimizer(kind, join(path, "optimizer"));
}

inline json optimizer_json(const netcore::OptimizerConfig& o) {
    return {{"optimizer", o.kind == netcore::OptimizerKind::sgd ? "sgd" : "rmsprop"},
            {"learning_rate", o.learning_rate},
            {"rms_decay", o.decay},
            {"rms_epsilon", o.epsilon},
            {"clip_norm", o.clip_norm}};
}

inline void parse_env(const json& j, EnvSpec& env) {
    const std::string p = "env";
    check_object(j, p, {"kind", "preset", "rows", "cols", "agent_levels", "food_levels", "max_steps", "sight",
                        "n_agents", "n_actions", "observation_width", "replay_log"});
    read(j, p, "kind", env.kind);
    if (env.kind == "lbf") {
        read(j, p, "preset", env.preset);
        env.lbf = envs::lbf_preset(env.preset);
        read(j, p, "rows", env.lbf.rows);
        read(j, p, "cols", env.lbf.cols);
        read_list(j, p, "agent_levels", env.lbf.agent_levels);
        read_list(j, p, "food_levels", env.lbf.food_levels);
        read(j, p, "max_steps", env.lbf.max_steps);
        read(j, p, "sight", env.lbf.sight);
        read(j, p, "replay_log", env.replay_log);
        for (auto k : {"n_agents", "n_actions", "observation_width"})
            if (j.contains(k)) throw ConfigError(join(p, k), "only valid for the coordination game");
        env.lbf.validate();
    } else if (env.kind == "coord") {
        for (auto k : {"preset", "rows", "cols", "agent_levels", "food_levels", "max_steps", "sight", "replay_log"})
            if (j.contains(k)) throw ConfigError(join(p, k), "only valid for lbf");
        read(j, p, "n_agents", env.coord.n_agents);
        read(j, p, "n_actions", env.coord.n_actions);
        read(j, p, "observation_width", env.coord.observation_width);
        env.coord.validate();
    } else {
        throw ConfigError("env.kind", "unknown environment '" + env.kind + "' (lbf or coord)");
    }
}

inline void parse_sharing(const json& j, ExperimentConfig& c) {
    auto kind = [](const std::string& s) {
        try {
            return sharednet::SharingMode::parse_kind(s);
        } catch (const ConfigError&) {
            throw ConfigError("sharing.mode", "unknown sharing mode '" + s + "'");
        }
    };
    if (j.is_string()) {
        c.mode = sharednet::SharingMode(kind(j.get<std::string>()));
    } else {
        check_object(j, "sharing", {"mode", "groups"});
        std::string m;
        read(j, "sharing", "mode", m);
        if (m.empty()) throw ConfigError("sharing.mode", "required");
        std::vector<std::size_t> groups;
        read_list(j, "sharing", "groups", groups);
        c.mode = sharednet::SharingMode(kind(m), groups);
        if (!c.mode.is_grouped() && !groups.empty()) throw ConfigError("sharing.groups", "only valid for Grouped");
    }
    c.mode.validate(c.env.n_agents());
}

inline void check_schedule(const std::string& s, std::size_t hidden, const std::string& path) {
    if (s.empty()) return;
    try {
        const auto sched = pruning::parse_schedule(s);
        if (sched.size() != hidden)
            throw ConfigError(path, "schedule '" + s + "' has " + std::to_string(sched.size()) + " entries but the network has " +
                                        std::to_string(hidden) + " hidden vectors");
    } catch (const ConfigError& e) {
        if (e.field() == path) throw;
        throw ConfigError(path, e.what());
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("not valid JSON: ") + e.what());
    }
    using namespace detail;
    check_object(j, "", {"name", "env", "algorithm", "sharing", "actor_schedule", "critic_schedule", "network", "seeds",
                         "total_steps", "eval_interval", "eval_episodes", "output_dir", "a2c", "qmix"});
    ExperimentConfig c;
    c.source = text;
    read(j, "", "name", c.name);
    if (j.contains("env")) parse_env(j["env"], c.env);

    std::string algo = "a2c";
    read(j, "", "algorithm", algo);
    if (algo == "a2c")
        c.algorithm = Algorithm::a2c;
    else if (algo == "qmix")
        c.algorithm = Algorithm::qmix;
    else
        throw ConfigError("algorithm", "unknown algorithm '" + algo + "' (a2c or qmix)");

    if (!j.contains("sharing")) throw ConfigError("sharing", "required");
    parse_sharing(j["sharing"], c);
    read(j, "", "actor_schedule", c.actor_schedule);
    read(j, "", "critic_schedule", c.critic_schedule);

    if (j.contains("network")) {
        const auto& n = j["network"];
        check_object(n, "network", {"hidden", "pre_width", "gru_width"});
        read_list(n, "network", "hidden", c.network.hidden);
        read(n, "network", "pre_width", c.network.pre_width);
        read(n, "network", "gru_width", c.network.gru_width);
        for (auto w : c.network.hidden)
            if (w == 0) throw ConfigError("network.hidden", "widths must be >= 1");
        if (c.network.pre_width == 0) throw ConfigError("network.pre_width", "must be >= 1");
        if (c.network.gru_width == 0) throw ConfigError("network.gru_width", "must be >= 1");
    }

    read_list(j, "", "seeds", c.seeds);
    if (c.seeds.empty()) throw ConfigError("seeds", "at least one seed required");
    read(j, "", "total_steps", c.total_steps);
    read(j, "", "eval_interval", c.eval_interval);
    read(j, "", "eval_episodes", c.eval_episodes);
    read(j, "", "output_dir", c.output_dir);
    if (c.total_steps == 0) throw ConfigError("total_steps", "must be >= 1");
    if (c.eval_interval == 0) throw ConfigError("eval_interval", "must be >= 1");
    if (c.eval_episodes == 0) throw ConfigError("eval_episodes", "must be >= 1");
    if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");

    if (j.contains("a2c")) {
        if (c.algorithm != Algorithm::a2c) throw ConfigError("a2c", "section given but algorithm is qmix");
        const auto& a = j["a2c"];
        check_object(a, "a2c", {"gamma", "n_steps", "entropy_coef", "value_coef", "optimizer", "learning_rate",
                                "rms_decay", "rms_epsilon", "clip_norm"});
        read(a, "a2c", "gamma", c.a2c.gamma);
        read(a, "a2c", "n_steps", c.a2c.n_steps);
        read(a, "a2c", "entropy_coef", c.a2c.entropy_coef);
        read(a, "a2c", "value_coef", c.a2c.value_coef);
        read_optimizer(a, "a2c", c.a2c.optimizer);
    }
    if (j.contains("qmix")) {
        if (c.algorithm != Algorithm::qmix) throw ConfigError("qmix", "section given but algorithm is a2c");
        const auto& q = j["qmix"];
        check_object(q, "qmix", {"gamma", "buffer_capacity", "batch_size", "min_fill", "updates_per_episode",
                                 "target_update_interval", "epsilon_start", "epsilon_finish", "epsilon_anneal_steps",
                                 "embed_width", "hyper_width", "optimizer", "learning_rate", "rms_decay", "rms_epsilon",
                                 "clip_norm"});
        read(q, "qmix", "gamma", c.qmix.gamma);
        read(q, "qmix", "buffer_capacity", c.qmix.buffer_capacity);
        read(q, "qmix", "batch_size", c.qmix.batch_size);
        read(q, "qmix", "min_fill", c.qmix.min_fill);
        read(q, "qmix", "updates_per_episode", c.qmix.updates_per_episode);
        read(q, "qmix", "target_update_interval", c.qmix.target_update_interval);
        read(q, "qmix", "epsilon_start", c.qmix.epsilon_start);
        read(q, "qmix", "epsilon_finish", c.qmix.epsilon_finish);
        read(q, "qmix", "epsilon_anneal_steps", c.qmix.epsilon_anneal_steps);
        read(q, "qmix", "embed_width", c.qmix.mixer.embed_width);
        read(q, "qmix", "hyper_width", c.qmix.mixer.hyper_width);
        read_optimizer(q, "qmix", c.qmix.optimizer);
    }
    if (c.algorithm == Algorithm::a2c) {
        c.a2c.validate();
        if (c.network.hidden.empty()) throw ConfigError("network.hidden", "at least one hidden layer required");
        check_schedule(c.actor_schedule, c.network.hidden.size(), "actor_schedule");
        check_schedule(c.critic_schedule, c.network.hidden.size(), "critic_schedule");
    } else {
        c.qmix.validate();
        if (!c.critic_schedule.empty()) throw ConfigError("critic_schedule", "qmix has no critic network");
        check_schedule(c.actor_schedule, 2, "actor_schedule");
    }
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

inline json ExperimentConfig::to_json() const {
    json env_j;
    if (env.kind == "lbf") {
        env_j = {{"kind", "lbf"},
                 {"rows", env.lbf.rows},
                 {"cols", env.lbf.cols},
                 {"agent_levels", env.lbf.agent_levels},
                 {"food_levels", env.lbf.food_levels},
                 {"max_steps", env.lbf.max_steps},
                 {"sight", env.lbf.sight},
                 {"replay_log", env.replay_log}};
        env_j["preset"] = env.preset;
    } else {
        env_j = {{"kind", "coord"},
                 {"n_agents", env.coord.n_agents},
                 {"n_actions", env.coord.n_actions},
                 {"observation_width", env.coord.observation_width}};
    }
    json sharing{{"mode", mode.name()}};
    if (mode.is_grouped()) sharing["groups"] = mode.assignment;
    json j{{"name", name},
           {"env", env_j},
           {"algorithm", std::string(harness::to_string(algorithm))},
           {"sharing", sharing},
           {"actor_schedule", actor_schedule},
           {"seeds", seeds},
           {"total_steps", total_steps},
           {"eval_interval", eval_interval},
           {"eval_episodes", eval_episodes},
           {"output_dir", output_dir}};
    if (algorithm == Algorithm::a2c) {
        j["critic_schedule"] = critic_schedule;
        j["network"] = {{"hidden", network.hidden}};
        json a = detail::optimizer_json(a2c.optimizer);
        a.update({{"gamma", a2c.gamma},
                  {"n_steps", a2c.n_steps},
                  {"entropy_coef", a2c.entropy_coef},
                  {"value_coef", a2c.value_coef}});
        j["a2c"] = a;
    } else {
        j["network"] = {{"pre_width", network.pre_width}, {"gru_width", network.gru_width}};
        json q = detail::optimizer_json(qmix.optimizer);
        q.update({{"gamma", qmix.gamma},
                  {"buffer_capacity", qmix.buffer_capacity},
                  {"batch_size", qmix.batch_size},
                  {"min_fill", qmix.min_fill},
                  {"updates_per_episode", qmix.updates_per_episode},
                  {"target_update_interval", qmix.target_update_interval},
                  {"epsilon_start", qmix.epsilon_start},
                  {"epsilon_finish", qmix.epsilon_finish},
                  {"epsilon_anneal_steps", qmix.epsilon_anneal_steps},
                  {"embed_width", qmix.mixer.embed_width},
                  {"hyper_width", qmix.mixer.hyper_width}});
        j["qmix"] = q;
    }
    return j;
}

/// Environment for one run. The coordination game draws only its hidden
/// target from the seed; LBF draws every episode start from it.
inline std::unique_ptr<envs::Environment> make_env(const EnvSpec& spec, Seed seed) {
    if (spec.kind == "coord") return std::make_unique<envs::CoordGameEnv>(spec.coord, seed);
    return std::make_unique<envs::LbfEnv>(spec.lbf, seed);
}

}  // namespace snpps::harness
