#pragma once

#include <span>
#include <string>

#include "srl/agreement.hpp"
#include "srl/cluster.hpp"

namespace srl::svg {

struct Options {
    /// Embed a generation timestamp comment. Off by default so reruns are byte-identical.
    bool timestamp = false;
};

/// Inertia (left axis) and silhouette (right axis) against k.
std::string elbow(const ElbowTable& table, const Options& options = {});

/// One stacked-area panel per cluster: symbol proportions across phase bins.
std::string phase(const PhaseDistribution& dist, std::span<const std::string> symbol_names,
                  const Options& options = {});

/// Two-column Sankey diagram of a contingency table (rows left, columns right).
std::string sankey(const ContingencyTable& table, const std::string& row_name, const std::string& col_name,
                   const Options& options = {});

void write_file(const std::string& path, const std::string& content);

}  // namespace srl::svg
