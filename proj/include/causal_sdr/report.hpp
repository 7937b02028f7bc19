#pragma once

#include <string>
#include <vector>

#include "causal_sdr/simulation.hpp"

namespace causal_sdr {

// Shortest round-trip double formatting used in machine-readable outputs.
std::string format_g17(double v);

// CSV bodies. Each starts with a `# manifest <hash>` comment line; NaN
// fields render empty.
std::string render_summary_csv(const std::vector<SummaryRow>& rows,
                               const std::string& manifest_hash);
std::string render_replicates_csv(const std::vector<ReplicateRecord>& records,
                                  const std::string& manifest_hash);

// Inverse of render_replicates_csv, tolerant of comment lines.
std::vector<ReplicateRecord> parse_replicates_csv(const std::string& text);

// Recomputes the summary table from a replicate log. A NaN truth leaves the
// mse column empty.
std::vector<SummaryRow> summarize_records(
    const std::vector<ReplicateRecord>& records, double truth);

// Standalone SVG with one box per estimator and a horizontal truth line
// (omitted when truth is NaN).
std::string render_boxplot_svg(const std::vector<ReplicateRecord>& records,
                               double truth, const std::string& title,
                               const std::string& manifest_hash);

}  // namespace causal_sdr
