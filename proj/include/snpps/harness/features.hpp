#pragma once

#include <charconv>
#include <cstddef>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "snpps/errors.hpp"
#include "snpps/sharednet/features.hpp"
#include "snpps/sharednet/shared_checkpoint.hpp"

namespace snpps::harness {

/// One observation per line, values separated by commas or whitespace.
/// Blank lines and lines starting with '#' are skipped.
inline std::vector<netcore::Vector> read_observations(std::istream& is, std::size_t width) {
    std::vector<netcore::Vector> out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::vector<double> vals;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && (line[i] == ',' || line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
            if (i == line.size()) break;
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + line.size(), v);
            if (ec != std::errc{}) throw ConfigError("observation line " + std::to_string(lineno), "not a number");
            vals.push_back(v);
            i = static_cast<std::size_t>(ptr - line.data());
        }
        if (vals.size() != width)
            throw ConfigError("observation line " + std::to_string(lineno),
                              "has " + std::to_string(vals.size()) + " values, the network takes " +
                                  std::to_string(width));
        out.push_back(Eigen::Map<const netcore::Vector>(vals.data(), static_cast<Eigen::Index>(vals.size())));
    }
    if (out.empty()) throw ConfigError("observations", "no observations found");
    return out;
}

/// Writes every agent's hidden features for each observation as long-form CSV.
/// The run id comes from the checkpoint, so rows stay traceable to their run.
inline void dump_features(std::istream& checkpoint, std::istream& observations, std::ostream& out) {
    const auto ck = sharednet::load_shared(checkpoint);
    const auto obs = read_observations(observations, ck.net.observation_width());
    std::vector<std::size_t> agents(ck.net.n_agents());
    std::iota(agents.begin(), agents.end(), std::size_t{0});
    sharednet::write_feature_csv_header(out);
    for (std::size_t k = 0; k < obs.size(); ++k)
        sharednet::write_feature_csv(out, ck.run_id, sharednet::dump_hidden_features(ck.net, obs[k], agents, k));
}

}  // namespace snpps::harness
