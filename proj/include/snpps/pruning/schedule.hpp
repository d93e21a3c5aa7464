#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "snpps/errors.hpp"
#include "snpps/netcore/topology.hpp"

namespace snpps::pruning {

/// Number of neurons (or weights) removed from a group of `width` at `ratio`.
/// floor(ratio * width); the small slack absorbs decimal representation error
/// (0.29 * 100 evaluates to 28.999...).
inline std::size_t prune_count(double ratio, std::size_t width) {
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(width) + 1e-9));
}

/// Per-hidden-vector pruning ratios, written "a-b-c" (e.g. "0-0.1-0.9").
class PruningSchedule {
public:
    PruningSchedule() = default;

    explicit PruningSchedule(std::vector<double> ratios) : ratios_(std::move(ratios)) {
        for (std::size_t k = 0; k < ratios_.size(); ++k) {
            const double r = ratios_[k];
            if (!(r >= 0.0 && r < 1.0))
                throw ConfigError("schedule[" + std::to_string(k) + "]", "ratio must lie in [0, 1)");
        }
    }

    /// All-zero schedule for `n` hidden vectors.
    static PruningSchedule none(std::size_t n) { return PruningSchedule(std::vector<double>(n, 0.0)); }

    static PruningSchedule uniform(std::size_t n, double ratio) {
        return PruningSchedule(std::vector<double>(n, ratio));
    }

    /// Parses dash-separated decimals. Errors name the offending token.
    static PruningSchedule parse(std::string_view s) {
        if (s.empty()) throw ConfigError("schedule", "empty schedule string");
        std::vector<double> ratios;
        std::size_t start = 0;
        while (true) {
            const std::size_t dash = s.find('-', start);
            const std::string_view tok = s.substr(start, dash == std::string_view::npos ? dash : dash - start);
            const std::string t(tok);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v))
                throw ConfigError("schedule token '" + t + "'", "not a decimal number");
            if (v < 0.0 || v >= 1.0)
                throw ConfigError("schedule token '" + t + "'", "ratio must lie in [0, 1)");
            ratios.push_back(v);
            if (dash == std::string_view::npos) break;
            start = dash + 1;
        }
        return PruningSchedule(std::move(ratios));
    }

    const std::vector<double>& ratios() const noexcept { return ratios_; }
    std::size_t size() const noexcept { return ratios_.size(); }
    double ratio(std::size_t k) const { return ratios_.at(k); }
    bool is_zero() const {
        for (double r : ratios_)
            if (r != 0.0) return false;
        return true;
    }

    /// Copy with hidden vector k's ratio replaced.
    PruningSchedule with_ratio(std::size_t k, double r) const {
        auto v = ratios_;
        v.at(k) = r;
        return PruningSchedule(std::move(v));
    }

    std::string str() const {
        std::string out;
        for (std::size_t k = 0; k < ratios_.size(); ++k) {
            if (k) out += '-';
            char buf[32];
            auto [end, ec] = std::to_chars(buf, buf + sizeof buf, ratios_[k]);
            out.append(buf, end);
        }
        return out;
    }

    /// Throws ConfigError unless there is one ratio per hidden vector and every
    /// hidden vector keeps at least one neuron.
    void validate(const netcore::NetworkTopology& topo) const {
        const auto widths = topo.hidden_widths();
        if (widths.size() != ratios_.size())
            throw ConfigError("schedule '" + str() + "'", "has " + std::to_string(ratios_.size()) +
                                                               " ratios but the network has " +
                                                               std::to_string(widths.size()) + " hidden vectors");
        for (std::size_t k = 0; k < widths.size(); ++k)
            if (prune_count(ratios_[k], widths[k]) >= widths[k])
                throw ConfigError("schedule '" + str() + "'",
                                  "ratio " + std::to_string(ratios_[k]) + " leaves no neuron in hidden layer " +
                                      std::to_string(k));
    }

    bool operator==(const PruningSchedule&) const = default;

private:
    std::vector<double> ratios_;
};

inline PruningSchedule parse_schedule(std::string_view s) { return PruningSchedule::parse(s); }

}  // namespace snpps::pruning
