// SPDX-License-Identifier: Apache-2.0
//
// Normalization of the assembled embedding representation.
//
//   batch:     per-column moments over the whole batch
//   layer:     per-row moments over the columns, no running statistics
//   partition: per-column moments over the rows of each domain, with the
//              affine (gamma * gamma_p[d]) * xhat + (beta + beta_p[d])
//   none:      identity

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "starplus/matrix.hpp"
#include "starplus/param.hpp"

namespace starplus {

enum class NormKind { none, batch, layer, partition };
enum class NormMode { training, inference };

/// Where partition norm takes its moments from. `shared` computes them over
/// the whole batch and keeps a single running row; only the affine stays
/// domain specific.
enum class PartitionMoments { per_domain, shared };

std::string_view to_string(NormKind kind);
NormKind parse_norm_kind(std::string_view text);
std::string_view to_string(PartitionMoments m);
PartitionMoments parse_partition_moments(std::string_view text);

struct NormConfig {
  NormKind kind = NormKind::none;
  std::size_t dim = 0;
  std::size_t num_domains = 1;
  double momentum = 0.99;
  double eps = 1e-5;
  PartitionMoments moments = PartitionMoments::per_domain;
};

class NormLayer {
 public:
  NormLayer() = default;

  /// Registers gamma/beta (1 x dim), gamma_p/beta_p (M x dim, partition only)
  /// and the running_mean/running_var buffers (batch and partition only).
  static NormLayer create(ParamStore& store, const std::string& prefix, const NormConfig& cfg);

  Matrix forward(const Matrix& x, std::span<const std::uint32_t> domains);
  Matrix backward(const Matrix& upstream);

  void set_mode(NormMode mode) { mode_ = mode; }
  NormMode mode() const { return mode_; }
  const NormConfig& config() const { return cfg_; }

  Param* gamma() { return gamma_; }
  Param* beta() { return beta_; }
  Param* gamma_p() { return gamma_p_; }
  Param* beta_p() { return beta_p_; }
  Buffer* running_mean() { return running_mean_; }
  Buffer* running_var() { return running_var_; }

 private:
  struct Group {
    std::vector<std::size_t> rows;
    std::size_t stat_row = 0;
  };
  struct Cache {
    Matrix xhat;
    /// 1 / sqrt(var + eps) applicable to each entry.
    Matrix inv_std;
    std::vector<Group> groups;
    std::vector<std::uint32_t> domains;
    NormMode mode = NormMode::training;
  };

  std::vector<Group> make_groups(std::span<const std::uint32_t> domains) const;
  void normalize_groups(const Matrix& x, Cache& cache);
  void normalize_rows(const Matrix& x, Cache& cache);
  Matrix backward_groups(const Matrix& dxhat, const Cache& cache) const;
  Matrix backward_rows(const Matrix& dxhat, const Cache& cache) const;

  NormConfig cfg_;
  NormMode mode_ = NormMode::training;
  Param* gamma_ = nullptr;
  Param* beta_ = nullptr;
  Param* gamma_p_ = nullptr;
  Param* beta_p_ = nullptr;
  Buffer* running_mean_ = nullptr;
  Buffer* running_var_ = nullptr;
  std::optional<Cache> cache_;
};

}  // namespace starplus
