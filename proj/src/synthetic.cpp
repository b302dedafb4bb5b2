// SPDX-License-Identifier: Apache-2.0

#include "starplus/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "starplus/error.hpp"
#include "starplus/loss.hpp"
#include "starplus/param.hpp"

namespace starplus {

namespace {

enum Stream : std::uint64_t { kWorld = 1, kCalibration = 2, kSampling = 3 };

Rng stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub = 0) {
  std::seed_seq seq{seed, stream, sub};
  return Rng(seq);
}

std::vector<double> cumulative(const std::vector<double>& weights) {
  std::vector<double> cdf(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cdf.begin());
  const double total = cdf.back();
  for (double& c : cdf) c /= total;
  cdf.back() = 1.0;
  return cdf;
}

std::uint32_t draw(const std::vector<double>& cdf, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return static_cast<std::uint32_t>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                             static_cast<std::ptrdiff_t>(cdf.size()) - 1));
}

double mean_ctr(double intercept, const std::vector<double>& effects) {
  double s = 0.0;
  for (double e : effects) s += sigmoid(intercept + e);
  return s / static_cast<double>(effects.size());
}

}  // namespace

void SyntheticSpec::validate() const {
  if (domain_shares.empty()) throw Error(ErrorCode::config, "synthetic spec needs >= 1 domain");
  if (target_ctrs.size() != domain_shares.size()) {
    throw Error(ErrorCode::config,
                fmt::format("synthetic spec: {} shares but {} target CTRs", domain_shares.size(),
                            target_ctrs.size()));
  }
  double total = 0.0;
  for (double s : domain_shares) {
    if (!(s >= 0.0)) throw Error(ErrorCode::config, "domain shares must be non-negative");
    total += s;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw Error(ErrorCode::config,
                fmt::format("domain shares sum to {:.17g}, expected 1 within 1e-12", total));
  }
  for (double c : target_ctrs) {
    if (!(c > 0.0 && c < 1.0)) {
      throw Error(ErrorCode::config, fmt::format("target CTR {} outside (0, 1)", c));
    }
  }
  if (vocab_sizes.empty()) throw Error(ErrorCode::config, "synthetic spec needs >= 1 field");
  for (std::size_t v : vocab_sizes) {
    if (v == 0) throw Error(ErrorCode::config, "vocab sizes must be >= 1");
  }
  if (shared_effect_dim == 0 || domain_effect_dim == 0) {
    throw Error(ErrorCode::config, "effect dims must be >= 1");
  }
  if (!(domain_mix >= 0.0 && domain_mix <= 1.0)) {
    throw Error(ErrorCode::config, fmt::format("domain_mix {} outside [0, 1]", domain_mix));
  }
  if (!(effect_scale >= 0.0) || !(feature_shift >= 0.0)) {
    throw Error(ErrorCode::config, "effect_scale and feature_shift must be >= 0");
  }
  if (calibration_samples == 0) throw Error(ErrorCode::config, "calibration_samples must be >= 1");
}

SyntheticSpec preset(std::string_view name, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.name = std::string(name);
  spec.seed = seed;
  std::vector<double> percent;
  std::vector<double> ctr_percent;
  if (name == "company1") {
    percent = {93.31, 6.68, 0.01};
    ctr_percent = {0.41, 16.28, 13.33};
  } else if (name == "company2") {
    percent = {59.76, 16.09, 15.59, 6.28, 1.96, 0.32};
    ctr_percent = {4.75, 14.79, 2.94, 10.0, 13.4, 20.11};
  } else if (name == "alicpp") {
    percent = {0.75, 61.43, 37.82};
    ctr_percent = {4.4, 3.82, 4.02};
  } else {
    throw Error(ErrorCode::config,
                fmt::format("unknown preset '{}' (expected company1|company2|alicpp)", name));
  }
  const double total = std::accumulate(percent.begin(), percent.end(), 0.0);
  for (double p : percent) spec.domain_shares.push_back(p / total);
  for (double c : ctr_percent) spec.target_ctrs.push_back(c / 100.0);
  return spec;
}

std::vector<std::string> preset_names() { return {"company1", "company2", "alicpp"}; }

SyntheticGenerator::SyntheticGenerator(SyntheticSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const std::size_t m = spec_.num_domains();
  const std::size_t f_count = spec_.num_fields();
  Rng rng = stream_rng(spec_.seed, kWorld);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Popularity: shared log-weights plus a per-domain tilt.
  std::vector<std::vector<double>> base(f_count);
  for (std::size_t f = 0; f < f_count; ++f) {
    base[f].resize(spec_.vocab_sizes[f]);
    for (double& w : base[f]) w = normal(rng);
  }
  feature_cdf_.assign(m, std::vector<std::vector<double>>(f_count));
  for (std::size_t d = 0; d < m; ++d) {
    for (std::size_t f = 0; f < f_count; ++f) {
      std::vector<double> w(spec_.vocab_sizes[f]);
      for (std::size_t v = 0; v < w.size(); ++v) {
        w[v] = std::exp(base[f][v] + spec_.feature_shift * normal(rng));
      }
      feature_cdf_[d][f] = cumulative(w);
    }
  }

  auto direction = [&](std::size_t dim) {
    std::vector<double> a(dim);
    for (double& x : a) x = normal(rng) / std::sqrt(static_cast<double>(dim));
    return a;
  };
  auto latent_effects = [&](const std::vector<std::vector<double>>& directions) {
    // result[k][f][v] = <latent_fv, directions[k]>
    const std::size_t dim = directions.front().size();
    std::vector<std::vector<std::vector<double>>> out(
        directions.size(), std::vector<std::vector<double>>(f_count));
    for (std::size_t f = 0; f < f_count; ++f) {
      for (auto& per : out) per[f].resize(spec_.vocab_sizes[f]);
      std::vector<double> latent(dim);
      for (std::size_t v = 0; v < spec_.vocab_sizes[f]; ++v) {
        for (double& x : latent) x = normal(rng);
        for (std::size_t k = 0; k < directions.size(); ++k) {
          out[k][f][v] = std::inner_product(latent.begin(), latent.end(), directions[k].begin(),
                                            0.0);
        }
      }
    }
    return out;
  };

  shared_effect_ = latent_effects({direction(spec_.shared_effect_dim)}).front();
  std::vector<std::vector<double>> domain_dirs;
  for (std::size_t d = 0; d < m; ++d) domain_dirs.push_back(direction(spec_.domain_effect_dim));
  domain_effect_ = latent_effects(domain_dirs);

  calibration_.intercepts.resize(m);
  calibration_.expected_ctrs.resize(m);
  std::vector<std::uint32_t> ids(f_count);
  for (std::size_t d = 0; d < m; ++d) {
    Rng cal = stream_rng(spec_.seed, kCalibration, d);
    std::vector<double> effects(spec_.calibration_samples);
    for (double& e : effects) {
      for (std::size_t f = 0; f < f_count; ++f) ids[f] = draw(feature_cdf_[d][f], cal);
      e = effect(static_cast<std::uint32_t>(d), ids);
    }
    const double target = spec_.target_ctrs[d];
    double lo = -32.0;
    double hi = 32.0;
    while (mean_ctr(lo, effects) > target && lo > -1e3) lo *= 2.0;
    while (mean_ctr(hi, effects) < target && hi < 1e3) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mean_ctr(mid, effects) < target ? lo : hi) = mid;
    }
    const double b = 0.5 * (lo + hi);
    const double achieved = mean_ctr(b, effects);
    if (!(std::abs(achieved - target) < 1e-4)) {
      throw Error(ErrorCode::calibration,
                  fmt::format("domain {}: cannot reach target CTR {} (closest {:.6g} at intercept "
                              "{:.6g})",
                              d, target, achieved, b));
    }
    calibration_.intercepts[d] = b;
    calibration_.expected_ctrs[d] = achieved;
  }
}

double SyntheticGenerator::effect(std::uint32_t domain, std::span<const std::uint32_t> ids) const {
  double shared = 0.0;
  double specific = 0.0;
  for (std::size_t f = 0; f < ids.size(); ++f) {
    shared += shared_effect_[f][ids[f]];
    specific += domain_effect_[domain][f][ids[f]];
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(ids.size()));
  return spec_.effect_scale * norm *
         (std::sqrt(1.0 - spec_.domain_mix) * shared + std::sqrt(spec_.domain_mix) * specific);
}

double SyntheticGenerator::logit(std::uint32_t domain, std::span<const std::uint32_t> ids) const {
  return calibration_.intercepts.at(domain) + effect(domain, ids);
}

Dataset SyntheticGenerator::generate(std::size_t n, std::uint64_t stream) const {
  if (n == 0) throw Error(ErrorCode::validation, "cannot generate an empty dataset");
  Dataset data;
  for (std::size_t f = 0; f < spec_.num_fields(); ++f) {
    data.fields.push_back({fmt::format("f{}", f), spec_.vocab_sizes[f]});
  }
  data.domain_names = default_domain_names(spec_.num_domains());
  data.feature_ids.reserve(n * spec_.num_fields());
  data.domains.reserve(n);
  data.labels.reserve(n);

  const std::vector<double> share_cdf = cumulative(spec_.domain_shares);
  Rng rng = stream_rng(spec_.seed, kSampling, stream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::uint32_t> ids(spec_.num_fields());
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t d = draw(share_cdf, rng);
    for (std::size_t f = 0; f < ids.size(); ++f) ids[f] = draw(feature_cdf_[d][f], rng);
    const double p = sigmoid(logit(d, ids));
    const std::uint8_t label = unit(rng) < p ? 1 : 0;
    data.push_back(ids, d, label);
  }
  return data;
}

Dataset generate(const SyntheticSpec& spec, std::size_t n) {
  return SyntheticGenerator(spec).generate(n);
}

std::string domain_summary_table(const Dataset& data, const std::string& title) {
  const auto counts = data.domain_counts();
  const auto positives = data.domain_positives();
  const double n = static_cast<double>(data.size());
  std::size_t total_pos = 0;
  for (std::size_t p : positives) total_pos += p;

  std::vector<std::string> header{"", "all"};
  std::vector<std::string> share{"Percentage", "-"};
  std::vector<std::string> ctr{"CTR", fmt::format("{:.2f}%", 100.0 * total_pos / n)};
  for (std::size_t d = 0; d < counts.size(); ++d) {
    header.push_back(fmt::format("#{}", d + 1));
    share.push_back(fmt::format("{:.2f}%", 100.0 * counts[d] / n));
    ctr.push_back(counts[d] == 0 ? "-"
                                 : fmt::format("{:.2f}%", 100.0 * positives[d] /
                                                              static_cast<double>(counts[d])));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto* line : {&header, &share, &ctr}) {
    for (std::size_t i = 0; i < line->size(); ++i) width[i] = std::max(width[i], (*line)[i].size());
  }
  std::string out = title.empty() ? "" : title + "\n";
  for (const auto* line : {&header, &share, &ctr}) {
    for (std::size_t i = 0; i < line->size(); ++i) {
      out += i == 0 ? fmt::format("{:<{}}", (*line)[i], width[i])
                    : fmt::format("  {:>{}}", (*line)[i], width[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace starplus
