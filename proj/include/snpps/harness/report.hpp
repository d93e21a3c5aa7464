#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "snpps/errors.hpp"
#include "snpps/harness/runner.hpp"

namespace snpps::harness {

struct ReportRow {
    fs::path dir;  // relative to the report root
    std::string config_hash, name, algorithm, mode, actor_schedule, critic_schedule;
    std::size_t seeds = 0;
    Stats final_return;
    std::size_t parameters = 0;
    double ms_per_1000_steps = 0.0;
    double relative_wall_clock = 0.0;  // ms_per_1000_steps over the slowest run in the report
};

/// Every run.json below `root`, sorted by directory.
inline std::vector<ReportRow> collect_report(const fs::path& root) {
    if (!fs::is_directory(root)) throw ConfigError(root.string(), "not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() == "run.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError(root.string(), "no run.json found");

    std::vector<ReportRow> rows;
    for (const auto& f : files) {
        std::ifstream in(f);
        json j;
        try {
            j = json::parse(in);
            ReportRow r;
            r.dir = fs::relative(f.parent_path(), root);
            r.config_hash = j.at("config_hash").get<std::string>();
            r.name = j.at("name").get<std::string>();
            r.algorithm = j.at("algorithm").get<std::string>();
            r.mode = j.at("mode").get<std::string>();
            r.actor_schedule = j.at("actor_schedule").get<std::string>();
            r.critic_schedule = j.at("critic_schedule").get<std::string>();
            r.seeds = j.at("seeds").size();
            r.final_return = {j.at("mean_final_return").get<double>(), j.at("std_final_return").get<double>(),
                              j.at("se_final_return").get<double>()};
            r.parameters = j.at("parameters").at("total").get<std::size_t>();
            r.ms_per_1000_steps = j.at("mean_ms_per_1000_steps").get<double>();
            rows.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ConfigError(f.string(), std::string("malformed run record: ") + e.what());
        }
    }
    double slowest = 0.0;
    for (const auto& r : rows) slowest = std::max(slowest, r.ms_per_1000_steps);
    for (auto& r : rows) r.relative_wall_clock = slowest > 0.0 ? r.ms_per_1000_steps / slowest : 0.0;
    return rows;
}

/// One line per run directory; the config hash column ties each row back to its run.
inline void write_report(std::ostream& os, const std::vector<ReportRow>& rows) {
    os << "run,config_hash,name,algorithm,mode,actor_schedule,critic_schedule,seeds,mean_final_return,"
          "std_final_return,se_final_return,parameters,ms_per_1000_steps,relative_wall_clock\n";
    for (const auto& r : rows)
        os << r.dir.generic_string() << ',' << r.config_hash << ',' << r.name << ',' << r.algorithm << ',' << r.mode
           << ',' << r.actor_schedule << ',' << r.critic_schedule << ',' << r.seeds << ',' << num(r.final_return.mean)
           << ',' << num(r.final_return.stddev) << ',' << num(r.final_return.se) << ',' << r.parameters << ','
           << num(r.ms_per_1000_steps) << ',' << num(r.relative_wall_clock) << '\n';
}

}  // namespace snpps::harness
