#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "snpps/errors.hpp"

namespace snpps::sharednet {

enum class SharingKind { FuPS, FuPS_id, SNP_PS, SNP_PS_id, USNP_PS, SNP_NPS, Grouped };

/// How N agents map onto the root network(s).
struct SharingMode {
    SharingKind kind = SharingKind::FuPS;
    /// Grouped only: cluster index of each agent.
    std::vector<std::size_t> assignment;

    SharingMode() = default;
    SharingMode(SharingKind k, std::vector<std::size_t> groups = {}) : kind(k), assignment(std::move(groups)) {}

    static SharingMode grouped(std::vector<std::size_t> groups) {
        return SharingMode(SharingKind::Grouped, std::move(groups));
    }

    /// Accepts "FuPS", "FuPS+id", "SNP-PS", "SNP-PS+id", "USNP-PS", "SNP-NPS", "Grouped"
    /// and the underscore spellings (FuPS_id, SNP_PS, ...).
    static SharingKind parse_kind(std::string_view s) {
        std::string n(s);
        std::replace(n.begin(), n.end(), '-', '_');
        std::replace(n.begin(), n.end(), '+', '_');
        if (n == "FuPS") return SharingKind::FuPS;
        if (n == "FuPS_id") return SharingKind::FuPS_id;
        if (n == "SNP_PS") return SharingKind::SNP_PS;
        if (n == "SNP_PS_id") return SharingKind::SNP_PS_id;
        if (n == "USNP_PS") return SharingKind::USNP_PS;
        if (n == "SNP_NPS") return SharingKind::SNP_NPS;
        if (n == "Grouped" || n == "grouped") return SharingKind::Grouped;
        throw ConfigError("sharing mode", "unknown mode '" + std::string(s) + "'");
    }

    std::string name() const {
        switch (kind) {
            case SharingKind::FuPS: return "FuPS";
            case SharingKind::FuPS_id: return "FuPS+id";
            case SharingKind::SNP_PS: return "SNP-PS";
            case SharingKind::SNP_PS_id: return "SNP-PS+id";
            case SharingKind::USNP_PS: return "USNP-PS";
            case SharingKind::SNP_NPS: return "SNP-NPS";
            case SharingKind::Grouped: return "Grouped";
        }
        return "?";
    }

    bool one_hot() const { return kind == SharingKind::FuPS_id || kind == SharingKind::SNP_PS_id; }
    bool structured() const {
        return kind == SharingKind::SNP_PS || kind == SharingKind::SNP_PS_id || kind == SharingKind::SNP_NPS;
    }
    bool unstructured() const { return kind == SharingKind::USNP_PS; }
    bool masked() const { return structured() || unstructured(); }
    bool is_grouped() const { return kind == SharingKind::Grouped; }

    std::size_t cluster_count() const {
        if (!is_grouped()) return 1;
        return assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
    }

    /// Grouped assignments must cover every agent and use clusters 0..K-1 with K <= N.
    void validate(std::size_t n_agents) const {
        if (!is_grouped()) return;
        if (assignment.size() != n_agents)
            throw ConfigError("sharing.groups", "assignment must list a cluster for each of the " +
                                                    std::to_string(n_agents) + " agents");
        const std::set<std::size_t> used(assignment.begin(), assignment.end());
        if (cluster_count() > n_agents || used.size() != cluster_count())
            throw ConfigError("sharing.groups", "clusters must be numbered 0..K-1 with K <= N");
    }

    bool operator==(const SharingMode&) const = default;
};

}  // namespace snpps::sharednet
