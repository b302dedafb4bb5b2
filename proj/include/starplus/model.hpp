// SPDX-License-Identifier: Apache-2.0
//
// Multi-domain CTR model graphs.
//
// Both architectures share the front end: per-field embeddings are
// concatenated and normalized once, giving z (B x D). Then
//
//   Star   every layer of the tower for domain d uses weights W_d (.) W_s and
//          bias b_d + b_s; logit = s_star + s_a
//   Star+  domain tower d, shared tower and auxiliary tower run independently
//          and their k-wide outputs go through a Fusion
//
// The auxiliary tower reads [z, e(d)] where e is a domain-indicator embedding.
// Rows are routed to their domain's tower, so mixed-domain batches work; the
// domain towers of absent domains are not touched.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "starplus/batch.hpp"
#include "starplus/fusion.hpp"
#include "starplus/layers.hpp"
#include "starplus/model_config.hpp"
#include "starplus/normalization.hpp"
#include "starplus/param.hpp"
#include "starplus/tensor_file.hpp"

namespace starplus {

/// One layer of a Star tower: act((x W_d (.) W_s) + (b_d + b_s)).
class StarLayer {
 public:
  StarLayer() = default;
  StarLayer(DenseLayer& domain, DenseLayer& shared);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& upstream);

  /// W_d (.) W_s
  Matrix combined_weight() const;
  /// b_d + b_s
  Matrix combined_bias() const;

 private:
  struct Cache {
    Matrix input;
    Matrix pre;
    Matrix weight;
  };
  Param* w_d_ = nullptr;
  Param* b_d_ = nullptr;
  Param* w_s_ = nullptr;
  Param* b_s_ = nullptr;
  Activation act_ = Activation::identity;
  std::optional<Cache> cache_;
};

class StarTower {
 public:
  StarTower() = default;
  StarTower(Mlp& domain, Mlp& shared);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& upstream);

 private:
  std::vector<StarLayer> layers_;
};

/// sigmoid(s_star + s_a), elementwise.
Matrix star_final_score(const Matrix& s_star, const Matrix& s_a);

class MultiDomainModel {
 public:
  /// Validates the config, registers every param and initializes them from
  /// config.seed.
  explicit MultiDomainModel(ModelConfig config);

  MultiDomainModel(const MultiDomainModel&) = delete;
  MultiDomainModel& operator=(const MultiDomainModel&) = delete;
  MultiDomainModel(MultiDomainModel&&) noexcept = default;
  MultiDomainModel& operator=(MultiDomainModel&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  void set_mode(NormMode mode) { norm_.set_mode(mode); }
  NormMode mode() const { return norm_.mode(); }

  /// Full forward pass in the current mode; returns B x 1 logits.
  Matrix forward(const Batch& batch);
  /// Backpropagates d loss / d logits into every param grad.
  void backward(const Matrix& dlogits);

  /// Inference-mode probabilities in (0, 1). Restores the previous mode.
  Matrix predict(const Batch& batch);

  // Sub-graphs, exposed for tests and tooling. Each caches for its own
  // backward exactly like the full forward does.
  Matrix assemble_input(const Batch& batch);
  Matrix star_combined_forward(const Matrix& z, std::span<const std::uint32_t> domains);
  TowerOutputs star_plus_forward(const Matrix& z, std::span<const std::uint32_t> domains);

  std::vector<EmbeddingTable>& embeddings() { return embeddings_; }
  EmbeddingTable& domain_embedding() { return domain_embedding_; }
  NormLayer& norm() { return norm_; }
  Mlp& domain_tower(std::size_t d) { return domain_towers_.at(d); }
  Mlp& shared_tower() { return shared_tower_; }
  Mlp& aux_tower() { return aux_tower_; }
  Fusion& fusion() { return fusion_; }

  /// Test hook: flips the sign of the gradient entering the shared (Star+) or
  /// auxiliary (Star) tower, producing a deliberately wrong backward pass.
  void set_backward_fault(bool on) { backward_fault_ = on; }

  TensorFile to_tensor_file() const;
  /// Rebuilds a model from a checkpoint. When `expected` is given, its
  /// architecture must match the manifest or ErrorCode::schema is raised with
  /// the differing keys. The loaded model is in inference mode.
  static MultiDomainModel from_tensor_file(const TensorFile& file,
                                           const ModelConfig* expected = nullptr);
  void save(const std::filesystem::path& path) const;
  static MultiDomainModel load(const std::filesystem::path& path,
                               const ModelConfig* expected = nullptr);

 private:
  struct Route {
    std::size_t domain = 0;
    std::vector<std::size_t> rows;
  };
  std::vector<Route> route(std::span<const std::uint32_t> domains) const;
  Matrix aux_forward(const Matrix& z, std::span<const std::uint32_t> domains);
  Matrix aux_backward(const Matrix& ds_a);
  Matrix star_plus_backward(const TowerOutputs& grads);
  Matrix star_backward(const Matrix& ds_star, const Matrix& ds_a);
  void input_backward(const Matrix& dx);

  ModelConfig config_;
  ParamStore store_;
  std::vector<EmbeddingTable> embeddings_;
  EmbeddingTable domain_embedding_;
  NormLayer norm_;
  std::vector<Mlp> domain_towers_;
  Mlp shared_tower_;
  Mlp aux_tower_;
  std::vector<StarTower> star_towers_;
  Fusion fusion_;
  bool backward_fault_ = false;
  /// Domain routing of the last tower forward.
  std::vector<Route> routes_;
  std::size_t routed_rows_ = 0;
};

}  // namespace starplus
