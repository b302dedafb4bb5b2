// SPDX-License-Identifier: Apache-2.0
//
// Architecture description shared by the model, the checkpoint manifest and
// the run configuration.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "starplus/fusion.hpp"
#include "starplus/normalization.hpp"

namespace starplus {

enum class Architecture { star, star_plus };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view text);

struct FieldSpec {
  std::string name;
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 8;

  friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

struct ModelConfig {
  Architecture architecture = Architecture::star_plus;
  std::size_t num_domains = 3;
  std::vector<FieldSpec> fields;
  std::vector<std::size_t> tower_widths = {64, 32};
  /// k: width of each Star+ tower output. Star towers always end in 1 unit.
  std::size_t tower_output_dim = 16;
  /// Width of the domain-indicator embedding appended to the auxiliary input.
  std::size_t domain_embedding_dim = 8;
  NormKind norm = NormKind::layer;
  double norm_momentum = 0.99;
  double norm_eps = 1e-5;
  PartitionMoments partition_moments = PartitionMoments::per_domain;
  FusionConfig fusion;
  std::uint64_t seed = 0;

  /// Throws ErrorCode::config on any invalid combination.
  void validate() const;

  std::size_t input_dim() const;
  /// Output width of each tower for this architecture.
  std::size_t tower_dim() const;

  /// Ordered key/value echo written into checkpoint manifests.
  std::vector<std::pair<std::string, std::string>> to_manifest() const;
  static ModelConfig from_manifest(const std::vector<std::pair<std::string, std::string>>& meta);
  /// Human-readable "key: expected X, found Y" lines; empty when equal.
  std::vector<std::string> diff(const ModelConfig& found) const;
};

std::string join_sizes(const std::vector<std::size_t>& v);
std::vector<std::size_t> parse_sizes(std::string_view text);

}  // namespace starplus
