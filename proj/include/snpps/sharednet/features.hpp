#pragma once

#include <charconv>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "snpps/sharednet/shared_network.hpp"

namespace snpps::sharednet {

struct FeatureRecord {
    std::size_t agent = 0;
    std::size_t layer = 0;
    std::size_t observation = 0;
    Vector values;
};

struct FeatureDump {
    std::vector<FeatureRecord> records;
};

/// Hidden features of each listed agent for one observation (zero recurrent state).
inline FeatureDump dump_hidden_features(const SharedAgentNetwork& net, const Vector& observation,
                                        const std::vector<std::size_t>& agents, std::size_t observation_id = 0) {
    FeatureDump dump;
    for (auto a : agents) {
        const auto out = net.agent_forward(a, observation);
        for (std::size_t k = 0; k < out.hidden.size(); ++k)
            dump.records.push_back({a, k, observation_id, out.hidden[k]});
    }
    return dump;
}

inline void write_feature_csv_header(std::ostream& os) { os << "run_id,step,agent,layer,neuron,value\n"; }

/// Long-form rows; `step` carries the observation id.
inline void write_feature_csv(std::ostream& os, const std::string& run_id, const FeatureDump& dump) {
    char buf[40];
    for (const auto& r : dump.records)
        for (Eigen::Index j = 0; j < r.values.size(); ++j) {
            auto [end, ec] = std::to_chars(buf, buf + sizeof buf, r.values[j]);
            os << run_id << ',' << r.observation << ',' << r.agent << ',' << r.layer << ',' << j << ',';
            os.write(buf, end - buf);
            os << '\n';
        }
}

}  // namespace snpps::sharednet
