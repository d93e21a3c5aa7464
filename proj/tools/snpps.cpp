// Command-line front end: run, sweep, report, dump-features.
//
// Exit codes: 0 success, 2 bad configuration or arguments, 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "snpps/harness/config.hpp"
#include "snpps/harness/features.hpp"
#include "snpps/harness/report.hpp"
#include "snpps/harness/runner.hpp"
#include "snpps/harness/sweep.hpp"

namespace fs = std::filesystem;
using namespace snpps;
using namespace snpps::harness;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

RunOptions options(bool quiet) {
    RunOptions o;
    if (!quiet) o.log = [](const std::string& line) { std::cerr << line << '\n'; };
    return o;
}

std::ifstream open_in(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError(p.string(), "cannot open");
    return in;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Selective parameter sharing experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir, axis, report_dir, ckpt_path, obs_path, features_out;
    std::vector<double> ratios;
    bool quiet = false;

    auto* run = app.add_subcommand("run", "Train every seed of one config");
    run->add_option("config", config_path, "Config file (JSON)")->required();
    run->add_option("--out", out_dir, "Output directory (default: output_dir from the config)");
    run->add_flag("-q,--quiet", quiet, "No progress lines");

    auto* sweep = app.add_subcommand("sweep", "Vary the last pruning ratio of the actor or critic");
    sweep->add_option("config", config_path, "Base config file (JSON)")->required();
    sweep->add_option("--axis", axis, "Network whose last ratio varies")
        ->required()
        ->check(CLI::IsMember({"actor", "critic"}));
    sweep->add_option("--ratios", ratios, "Comma-separated ratios")->required()->delimiter(',');
    sweep->add_option("--out", out_dir, "Output directory (default: <output_dir>/sweep_<axis>)");
    sweep->add_flag("-q,--quiet", quiet, "No progress lines");

    auto* report = app.add_subcommand("report", "Tabulate every run below a directory");
    report->add_option("dir", report_dir, "Directory holding run outputs")->required();

    auto* dump = app.add_subcommand("dump-features", "Hidden features of each agent for each observation");
    dump->add_option("checkpoint", ckpt_path, "Shared checkpoint (actor.ckpt, critic.ckpt, utility.ckpt)")->required();
    dump->add_option("obs-file", obs_path, "One observation per line")->required();
    dump->add_option("-o,--out", features_out, "CSV output (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfigError;
    }

    try {
        if (*run) {
            const auto c = load_config(config_path);
            const fs::path out = out_dir.empty() ? fs::path(c.output_dir) : fs::path(out_dir);
            const auto recs = run_experiment(c, options(quiet), out);
            for (const auto& r : recs)
                std::cout << "seed " << r.seed << " final_return " << num(r.final_return) << " steps " << r.steps << '\n';
            std::cout << "wrote " << out.string() << " (config " << c.hash() << ")\n";
        } else if (*sweep) {
            const auto c = load_config(config_path);
            const fs::path out = out_dir.empty() ? fs::path(c.output_dir) / ("sweep_" + axis) : fs::path(out_dir);
            const auto rows = sweep_pruning_ratio(c, parse_axis(axis), ratios, out, options(quiet));
            for (const auto& r : rows)
                std::cout << axis << ' ' << r.schedule << " mean " << num(r.stats.mean) << " se " << num(r.stats.se)
                          << '\n';
            std::cout << "wrote " << (out / "sweep.csv").string() << '\n';
        } else if (*report) {
            const auto rows = collect_report(report_dir);
            const fs::path out = fs::path(report_dir) / "report.csv";
            {
                std::ofstream os(out, std::ios::binary);
                if (!os) throw std::runtime_error("cannot write " + out.string());
                write_report(os, rows);
            }
            write_report(std::cout, rows);
        } else if (*dump) {
            auto ck = open_in(ckpt_path);
            auto obs = open_in(obs_path);
            if (features_out.empty()) {
                dump_features(ck, obs, std::cout);
            } else {
                std::ofstream os(features_out, std::ios::binary);
                if (!os) throw std::runtime_error("cannot write " + features_out);
                dump_features(ck, obs, os);
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return 0;
}
