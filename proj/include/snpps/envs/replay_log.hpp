#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "snpps/envs/lbf.hpp"
#include "snpps/errors.hpp"

// JSON-lines LBF replay log. One "episode" record per reset, then one "step"
// record per transition:
//
//   {"event":"episode","rows":5,"cols":5,"max_steps":25,"sight":2,
//    "agent_levels":[1,1,2],"food_levels":[3,3],
//    "agents":[[r,c],...],"foods":[[r,c],...]}
//   {"event":"step","t":1,"actions":[0,5,1],"rewards":[0,0.25,0.25],"done":false}

namespace snpps::envs {

struct ReplayEpisode {
    LbfConfig config;
    LbfState initial;
    std::vector<std::vector<int>> actions;
    std::vector<std::vector<double>> rewards;
    std::vector<bool> done;
};

namespace detail {

inline nlohmann::json cells_json(const std::vector<Cell>& cells) {
    auto a = nlohmann::json::array();
    for (const auto& c : cells) a.push_back({c.row, c.col});
    return a;
}

inline std::vector<Cell> cells_from(const nlohmann::json& j) {
    std::vector<Cell> out;
    for (const auto& c : j) out.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
    return out;
}

}  // namespace detail

class ReplayLogWriter {
public:
    explicit ReplayLogWriter(std::ostream& os) : os_(os) {}

    void begin_episode(const LbfConfig& cfg, const LbfState& s) {
        nlohmann::json j{{"event", "episode"},
                         {"rows", cfg.rows},
                         {"cols", cfg.cols},
                         {"max_steps", cfg.max_steps},
                         {"sight", cfg.sight},
                         {"agent_levels", cfg.agent_levels},
                         {"food_levels", cfg.food_levels},
                         {"agents", detail::cells_json(s.agents)},
                         {"foods", detail::cells_json(s.foods)}};
        os_ << j.dump() << '\n';
    }

    void step(int t, std::span<const int> actions, const std::vector<double>& rewards, bool done) {
        nlohmann::json j{{"event", "step"},
                         {"t", t},
                         {"actions", std::vector<int>(actions.begin(), actions.end())},
                         {"rewards", rewards},
                         {"done", done}};
        os_ << j.dump() << '\n';
    }

private:
    std::ostream& os_;
};

inline std::vector<ReplayEpisode> read_replay_log(std::istream& is) {
    std::vector<ReplayEpisode> eps;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto ev = j.at("event").get<std::string>();
            if (ev == "episode") {
                ReplayEpisode e;
                e.config.rows = j.at("rows");
                e.config.cols = j.at("cols");
                e.config.max_steps = j.at("max_steps");
                e.config.sight = j.at("sight");
                e.config.agent_levels = j.at("agent_levels").get<std::vector<int>>();
                e.config.food_levels = j.at("food_levels").get<std::vector<int>>();
                e.initial.agents = detail::cells_from(j.at("agents"));
                e.initial.foods = detail::cells_from(j.at("foods"));
                e.initial.food_alive.assign(e.initial.foods.size(), true);
                eps.push_back(std::move(e));
            } else if (ev == "step") {
                if (eps.empty()) throw ConfigError("replay log", "step before episode");
                eps.back().actions.push_back(j.at("actions").get<std::vector<int>>());
                eps.back().rewards.push_back(j.at("rewards").get<std::vector<double>>());
                eps.back().done.push_back(j.at("done").get<bool>());
            } else {
                throw ConfigError("replay log", "unknown event '" + ev + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("replay log line " + std::to_string(lineno), e.what());
        }
    }
    return eps;
}

}  // namespace snpps::envs
