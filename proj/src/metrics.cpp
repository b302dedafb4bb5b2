// SPDX-License-Identifier: Apache-2.0

#include "starplus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "starplus/error.hpp"

namespace starplus {

namespace {

void check_labels(std::span<const std::uint8_t> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) {
      throw Error(ErrorCode::validation,
                  fmt::format("label {} at index {} is not 0 or 1", labels[i], i));
    }
  }
}

std::string format_metric(const std::optional<double>& v) {
  return v ? fmt::format("{:.5f}", *v) : std::string("NA");
}

}  // namespace

std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::validation,
                fmt::format("auc: {} scores but {} labels", scores.size(), labels.size()));
  }
  check_labels(labels);
  const std::size_t n = scores.size();
  std::uint64_t positives = 0;
  for (std::uint8_t y : labels) positives += y;
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the average rank of a tie block spanning sorted positions [i, j)
  // (1-based ranks i+1..j) is i + j + 1, an integer, so the rank sum stays exact.
  std::uint64_t rank_sum_x2 = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    std::uint64_t block_positives = 0;
    for (std::size_t k = i; k < j; ++k) block_positives += labels[order[k]];
    rank_sum_x2 += block_positives * static_cast<std::uint64_t>(i + j + 1);
    i = j;
  }
  // 2U = 2 * rank_sum - P(P+1) = concordant*2 + ties
  const std::uint64_t u_x2 = rank_sum_x2 - positives * (positives + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(positives) *
                                      static_cast<double>(negatives));
}

double logloss(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  if (probs.size() != labels.size()) {
    throw Error(ErrorCode::validation,
                fmt::format("logloss: {} probabilities but {} labels", probs.size(),
                            labels.size()));
  }
  if (probs.empty()) throw Error(ErrorCode::validation, "logloss: empty input");
  check_labels(labels);
  constexpr double kLo = 1e-15;
  constexpr double kHi = 1.0 - 1e-15;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kLo, kHi);
    total += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.size());
}

const MetricRow* MetricReport::find_domain(int domain) const {
  for (const MetricRow& r : per_domain) {
    if (r.domain == domain) return &r;
  }
  return nullptr;
}

MetricReport report(std::span<const double> probs, std::span<const std::uint8_t> labels,
                    std::span<const std::uint32_t> domains) {
  if (probs.size() != labels.size() || probs.size() != domains.size()) {
    throw Error(ErrorCode::validation,
                fmt::format("report: lengths differ (probs {}, labels {}, domains {})",
                            probs.size(), labels.size(), domains.size()));
  }
  auto make_row = [](int domain, std::span<const double> p, std::span<const std::uint8_t> y) {
    MetricRow row;
    row.domain = domain;
    row.examples = p.size();
    for (std::uint8_t v : y) row.positives += v;
    row.negatives = row.examples - row.positives;
    row.auc = auc(p, y);
    row.logloss = logloss(p, y);
    return row;
  };

  MetricReport out;
  out.overall = make_row(-1, probs, labels);

  std::map<std::uint32_t, std::pair<std::vector<double>, std::vector<std::uint8_t>>> groups;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    auto& g = groups[domains[i]];
    g.first.push_back(probs[i]);
    g.second.push_back(labels[i]);
  }
  for (const auto& [domain, g] : groups) {
    out.per_domain.push_back(make_row(static_cast<int>(domain), g.first, g.second));
  }
  return out;
}

std::string report_csv(const MetricReport& r, const std::string& split, bool header) {
  std::string out = header ? "split,domain,examples,positives,auc,logloss\n" : "";
  auto line = [&](const MetricRow& row) {
    const std::string domain = row.domain < 0 ? "all" : std::to_string(row.domain);
    const std::string auc_text = row.auc ? fmt::format("{:.17g}", *row.auc) : "NA";
    out += fmt::format("{},{},{},{},{},{:.17g}\n", split, domain, row.examples, row.positives,
                       auc_text, row.logloss);
  };
  line(r.overall);
  for (const MetricRow& row : r.per_domain) line(row);
  return out;
}

std::string report_table(const MetricReport& r, const std::string& title) {
  std::vector<std::string> header{"", "all"};
  std::vector<std::string> auc_row{"AUC", format_metric(r.overall.auc)};
  std::vector<std::string> loss_row{"Logloss", fmt::format("{:.5f}", r.overall.logloss)};
  std::vector<std::string> count_row{"Examples", std::to_string(r.overall.examples)};
  for (const MetricRow& row : r.per_domain) {
    header.push_back(fmt::format("#{}", row.domain + 1));
    auc_row.push_back(format_metric(row.auc));
    loss_row.push_back(fmt::format("{:.5f}", row.logloss));
    count_row.push_back(std::to_string(row.examples));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto* line : {&header, &auc_row, &loss_row, &count_row}) {
    for (std::size_t i = 0; i < line->size(); ++i) width[i] = std::max(width[i], (*line)[i].size());
  }
  std::string out = title.empty() ? "" : title + "\n";
  for (const auto* line : {&header, &auc_row, &loss_row, &count_row}) {
    for (std::size_t i = 0; i < line->size(); ++i) {
      out += i == 0 ? fmt::format("{:<{}}", (*line)[i], width[i])
                    : fmt::format("  {:>{}}", (*line)[i], width[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace starplus
