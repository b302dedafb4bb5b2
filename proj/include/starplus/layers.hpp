// SPDX-License-Identifier: Apache-2.0
//
// Layers with hand-written forward/backward passes. A layer caches what its
// backward pass needs during forward; backward consumes the cache, so every
// backward must be preceded by its own forward.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "starplus/matrix.hpp"
#include "starplus/param.hpp"

namespace starplus {

enum class Activation { identity, relu };

/// Applies the activation in place to a pre-activation matrix.
Matrix activate(const Matrix& pre, Activation act);
/// upstream * act'(pre), elementwise.
Matrix activation_backward(const Matrix& upstream, const Matrix& pre, Activation act);

/// Records a digest of every relu on/off pattern produced on this thread while
/// alive. The gradient checker uses it to detect perturbations that move a
/// unit across the relu kink, where finite differences are meaningless.
class ActivationProbe {
 public:
  ActivationProbe();
  ~ActivationProbe();
  ActivationProbe(const ActivationProbe&) = delete;
  ActivationProbe& operator=(const ActivationProbe&) = delete;

  void reset();
  std::uint64_t signature() const;
  /// Smallest |pre-activation| seen among relu units since reset.
  double min_abs_preactivation() const;

  static void record(const Matrix& pre);
};

class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(Param& weight, Param& bias, Activation act)
      : weight_(&weight), bias_(&bias), act_(act) {}

  /// Registers "<prefix>/weight" (in x out, Xavier) and "<prefix>/bias" (zeros).
  static DenseLayer create(ParamStore& store, const std::string& prefix, std::size_t in_dim,
                           std::size_t out_dim, Activation act, Rng& rng);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& upstream);

  std::size_t in_dim() const { return weight_->value.rows(); }
  std::size_t out_dim() const { return weight_->value.cols(); }
  Activation activation() const { return act_; }
  Param& weight() { return *weight_; }
  Param& bias() { return *bias_; }
  const Param& weight() const { return *weight_; }
  const Param& bias() const { return *bias_; }

 private:
  struct Cache {
    Matrix input;
    Matrix pre;
  };

  Param* weight_ = nullptr;
  Param* bias_ = nullptr;
  Activation act_ = Activation::identity;
  std::optional<Cache> cache_;
};

/// Stack of dense layers: relu on every hidden layer, `output_act` on the last.
class Mlp {
 public:
  Mlp() = default;

  static Mlp create(ParamStore& store, const std::string& prefix, std::size_t in_dim,
                    std::span<const std::size_t> hidden, std::size_t out_dim,
                    Activation output_act, Rng& rng);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& upstream);

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

 private:
  std::vector<DenseLayer> layers_;
};

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::string field, Param& table) : field_(std::move(field)), table_(&table) {}

  /// Registers "<prefix>" as a vocab x dim table drawn from normal(0, stddev).
  static EmbeddingTable create(ParamStore& store, const std::string& prefix,
                               const std::string& field, std::size_t vocab, std::size_t dim,
                               double stddev, Rng& rng);

  Matrix forward(std::span<const std::uint32_t> ids);
  void backward(const Matrix& upstream);

  std::size_t vocab_size() const { return table_->value.rows(); }
  std::size_t dim() const { return table_->value.cols(); }
  const std::string& field() const { return field_; }
  Param& table() { return *table_; }

 private:
  std::string field_;
  Param* table_ = nullptr;
  std::optional<std::vector<std::uint32_t>> cached_ids_;
};

}  // namespace starplus
