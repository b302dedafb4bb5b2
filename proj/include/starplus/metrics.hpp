// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics: rank-based AUC and logloss, overall and per domain.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace starplus {

/// Mann-Whitney AUC: (concordant + 0.5 * tied) / (P * N), from one sort with
/// average ranks for tied scores. Returns nullopt when either class is absent.
std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Mean binary cross-entropy of probabilities clamped to [1e-15, 1 - 1e-15].
double logloss(std::span<const double> probs, std::span<const std::uint8_t> labels);

struct MetricRow {
  /// -1 for the overall row.
  int domain = -1;
  std::size_t examples = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  /// Empty when the row lacks one of the two classes.
  std::optional<double> auc;
  double logloss = 0.0;

  bool auc_defined() const { return auc.has_value(); }
};

struct MetricReport {
  MetricRow overall;
  /// Ascending domain id; only domains present in the data.
  std::vector<MetricRow> per_domain;

  const MetricRow* find_domain(int domain) const;
};

MetricReport report(std::span<const double> probs, std::span<const std::uint8_t> labels,
                    std::span<const std::uint32_t> domains);

/// CSV with columns split,domain,examples,positives,auc,logloss. The overall
/// row uses domain "all"; undefined AUC is written as "NA". `header` controls
/// whether the column line is emitted.
std::string report_csv(const MetricReport& r, const std::string& split, bool header = true);

/// Per-domain table: one column for "all" and one per domain (1-based labels),
/// with AUC and Logloss rows.
std::string report_table(const MetricReport& r, const std::string& title);

}  // namespace starplus
