#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "snpps/harness/config.hpp"
#include "snpps/harness/runner.hpp"

namespace snpps::harness {

enum class SweepAxis { actor, critic };

inline SweepAxis parse_axis(const std::string& s) {
    if (s == "actor") return SweepAxis::actor;
    if (s == "critic") return SweepAxis::critic;
    throw ConfigError("axis", "unknown axis '" + s + "' (actor or critic)");
}

inline std::string_view to_string(SweepAxis a) { return a == SweepAxis::actor ? "actor" : "critic"; }

struct SweepRow {
    double ratio = 0.0;
    std::string schedule;
    std::vector<double> finals;  // one per seed, in config order
    Stats stats;
    fs::path dir;
};

/// `schedule` with its last ratio replaced; an empty schedule counts as all zeros.
inline std::string with_last_ratio(const std::string& schedule, std::size_t hidden, double ratio) {
    auto s = schedule.empty() ? pruning::PruningSchedule::none(hidden) : pruning::parse_schedule(schedule);
    if (s.size() == 0) throw ConfigError("schedule", "no hidden vectors to prune");
    return s.with_ratio(s.size() - 1, ratio).str();
}

/// The config a sweep runs at one ratio. It goes back through the parser so a
/// bad ratio is reported the same way a bad config file would be.
inline ExperimentConfig sweep_point(const ExperimentConfig& base, SweepAxis axis, double ratio, const fs::path& dir) {
    auto j = base.to_json();
    const std::size_t hidden = base.algorithm == Algorithm::a2c ? base.network.hidden.size() : 2;
    const char* key = axis == SweepAxis::actor ? "actor_schedule" : "critic_schedule";
    const std::string cur = axis == SweepAxis::actor ? base.actor_schedule : base.critic_schedule;
    try {
        j[key] = with_last_ratio(cur, hidden, ratio);
    } catch (const ConfigError& e) {
        throw ConfigError("ratios", e.what());
    }
    j["output_dir"] = dir.string();
    return parse_config(j.dump(2) + "\n");
}

/// Runs the base config once per ratio, varying the last pruning ratio of one
/// network and keeping the other network's schedule as configured. Writes
/// out/<axis>_<ratio>/ per point and out/sweep.csv.
inline std::vector<SweepRow> sweep_pruning_ratio(const ExperimentConfig& base, SweepAxis axis,
                                                 const std::vector<double>& ratios, const fs::path& out,
                                                 const RunOptions& opt = {}) {
    if (ratios.empty()) throw ConfigError("ratios", "at least one ratio required");
    if (!base.mode.masked())
        throw ConfigError("sharing.mode", "a pruning sweep needs a masked mode, not " + base.mode.name());
    if (axis == SweepAxis::critic && base.algorithm == Algorithm::qmix)
        throw ConfigError("axis", "qmix has no critic network");

    // build every point first so a bad ratio fails before any training
    std::vector<ExperimentConfig> points;
    for (double r : ratios) points.push_back(sweep_point(base, axis, r, out / (std::string(to_string(axis)) + "_" + num(r))));

    fs::create_directories(out);
    std::vector<SweepRow> rows;
    for (std::size_t k = 0; k < ratios.size(); ++k) {
        const auto& c = points[k];
        SweepRow row;
        row.ratio = ratios[k];
        row.schedule = axis == SweepAxis::actor ? c.actor_schedule : c.critic_schedule;
        row.dir = c.output_dir;
        for (const auto& r : run_experiment(c, opt)) row.finals.push_back(r.final_return);
        row.stats = summarize(row.finals);
        rows.push_back(std::move(row));
    }

    auto os = detail::open_out(out / "sweep.csv");
    const bool actor = axis == SweepAxis::actor;
    os << "# config_hash=" << base.hash() << " axis=" << to_string(axis);
    if (base.algorithm == Algorithm::a2c) {
        const auto& fixed = actor ? base.critic_schedule : base.actor_schedule;
        os << " fixed_" << (actor ? "critic" : "actor") << "_schedule=" << (fixed.empty() ? "none" : fixed);
    }
    os << " seeds=";
    for (std::size_t k = 0; k < base.seeds.size(); ++k) os << (k ? ";" : "") << base.seeds[k];
    os << "\nratio,schedule,point_hash,n,mean_final_return,std_final_return,se_final_return\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        os << num(r.ratio) << ',' << r.schedule << ',' << points[k].hash() << ',' << r.finals.size() << ','
           << num(r.stats.mean) << ',' << num(r.stats.stddev) << ',' << num(r.stats.se) << '\n';
    }
    return rows;
}

}  // namespace snpps::harness
