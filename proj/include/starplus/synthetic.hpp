// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multi-domain CTR data with a known logistic ground truth.
//
// For an example in domain d with feature values v_1..v_F:
//
//   logit = b_d + scale * ( sqrt(1 - mix) * sum_f shared(f, v_f)
//                         + sqrt(mix)     * sum_f specific(d, f, v_f) ) / sqrt(F)
//
// shared(f, v) = <u_fv, a> and specific(d, f, v) = <q_fv, a_d> are low-rank
// linear effects (latent widths shared_effect_dim / domain_effect_dim).
// Feature values follow domain-conditional categorical distributions, and the
// intercepts b_d are solved by bisection so that the mean of sigmoid(logit)
// over a calibration sample of domain d equals target_ctrs[d].

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "starplus/dataset.hpp"

namespace starplus {

struct SyntheticSpec {
  std::string name = "custom";
  std::vector<double> domain_shares;
  std::vector<double> target_ctrs;
  std::vector<std::size_t> vocab_sizes = {200, 100, 100, 50, 20, 10};
  std::size_t shared_effect_dim = 4;
  std::size_t domain_effect_dim = 2;
  /// Standard deviation of the non-intercept part of the logit.
  double effect_scale = 1.0;
  /// Fraction of effect variance that is domain specific, in [0, 1].
  double domain_mix = 0.5;
  /// Std of the per-domain log-popularity tilt of every feature value.
  double feature_shift = 1.0;
  std::size_t calibration_samples = 20000;
  std::uint64_t seed = 0;

  std::size_t num_domains() const { return domain_shares.size(); }
  std::size_t num_fields() const { return vocab_sizes.size(); }

  /// Shares must sum to 1 within 1e-12, CTRs must lie in (0, 1).
  void validate() const;
};

/// "company1", "company2" or "alicpp": domain shares and CTRs of the
/// corresponding dataset statistics, default feature settings.
SyntheticSpec preset(std::string_view name, std::uint64_t seed);
std::vector<std::string> preset_names();

struct Calibration {
  std::vector<double> intercepts;
  /// Mean sigmoid(logit) over the calibration sample, per domain.
  std::vector<double> expected_ctrs;
};

class SyntheticGenerator {
 public:
  /// Builds the ground truth and calibrates intercepts. Throws
  /// ErrorCode::calibration when a target cannot be reached.
  explicit SyntheticGenerator(SyntheticSpec spec);

  const SyntheticSpec& spec() const { return spec_; }
  const Calibration& calibration() const { return calibration_; }

  /// n examples; a pure function of (spec, n, stream).
  Dataset generate(std::size_t n, std::uint64_t stream = 0) const;

  /// Ground-truth logit of one example.
  double logit(std::uint32_t domain, std::span<const std::uint32_t> ids) const;

 private:
  double effect(std::uint32_t domain, std::span<const std::uint32_t> ids) const;

  SyntheticSpec spec_;
  /// [domain][field] cumulative distribution over values
  std::vector<std::vector<std::vector<double>>> feature_cdf_;
  /// [field][value]
  std::vector<std::vector<double>> shared_effect_;
  /// [domain][field][value]
  std::vector<std::vector<std::vector<double>>> domain_effect_;
  Calibration calibration_;
};

/// Convenience: SyntheticGenerator(spec).generate(n).
Dataset generate(const SyntheticSpec& spec, std::size_t n);

/// Per-domain share/CTR summary laid out like the dataset statistics table.
std::string domain_summary_table(const Dataset& data, const std::string& title);

}  // namespace starplus
