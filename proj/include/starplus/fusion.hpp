// SPDX-License-Identifier: Apache-2.0
//
// Output fusion for Star+: maps the three tower outputs (domain, shared,
// auxiliary; each B x k) to one logit per example.
//
//   add           c_d*h_d(s_d) + c_s*h_s(s_s) + c_a*h_a(s_a), constants fixed
//   adaptive_add  same with c_d = sigmoid(w[d]), c_s = c_a = (1 - c_d) / 2
//   gate          g = softmax(gate_net(onehot(d))); head(g0*s_d + g1*s_s + g2*s_a)
//   concat        head([s_d, s_s, s_a])
//
// The Star architecture does not use this module; its combination is fixed
// (`builtin`) and only exists so configs can name it.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "starplus/layers.hpp"
#include "starplus/matrix.hpp"
#include "starplus/param.hpp"

namespace starplus {

enum class FusionType { builtin, add, adaptive_add, gate, concat };

std::string_view to_string(FusionType type);
FusionType parse_fusion_type(std::string_view text);

struct FusionConfig {
  FusionType type = FusionType::adaptive_add;
  /// add only
  double c_d = 1.0;
  double c_s = 1.0;
  double c_a = 1.0;
  /// gate only: width of the hidden relu layer of the gate network
  std::size_t gate_hidden = 8;
  /// concat only: hidden widths of the head; a final 1-unit layer is appended
  std::vector<std::size_t> concat_head_widths = {16};

  void validate() const;
};

struct TowerOutputs {
  Matrix s_d;
  Matrix s_s;
  Matrix s_a;
};

/// c_d, c_s, c_a for adaptive add at raw weight w.
std::array<double, 3> adaptive_constants(double w) noexcept;

class Fusion {
 public:
  Fusion() = default;

  static Fusion create(ParamStore& store, const std::string& prefix, const FusionConfig& cfg,
                       std::size_t tower_dim, std::size_t num_domains, Rng& rng);

  /// Returns B x 1 logits.
  Matrix forward(const TowerOutputs& towers, std::span<const std::uint32_t> domains);
  /// Gradients w.r.t. s_d, s_s, s_a.
  TowerOutputs backward(const Matrix& dlogits);

  const FusionConfig& config() const { return cfg_; }

  /// Current adaptive-add constants for a domain (adaptive_add only).
  std::array<double, 3> domain_constants(std::uint32_t domain) const;
  /// Gate weights (B x 3) from the last forward (gate only).
  const Matrix& last_gate_weights() const;
  /// Gate weights for a list of domains, computed without touching caches.
  Matrix gate_weights(std::span<const std::uint32_t> domains) const;

  DenseLayer& head_d() { return head_d_; }
  DenseLayer& head_s() { return head_s_; }
  DenseLayer& head_a() { return head_a_; }
  DenseLayer& gate_head() { return gate_head_; }
  Mlp& gate_net() { return gate_net_; }
  Mlp& concat_head() { return concat_head_; }
  Param* domain_weights() { return w_d_; }

 private:
  struct Cache {
    std::vector<std::uint32_t> domains;
    TowerOutputs towers;
    /// add/adaptive_add: B x 3 head outputs and B x 3 constants
    Matrix head_out;
    Matrix constants;
    /// gate: B x 3 softmax weights
    Matrix gate;
  };

  Matrix one_hot(std::span<const std::uint32_t> domains) const;

  FusionConfig cfg_;
  std::size_t tower_dim_ = 0;
  std::size_t num_domains_ = 0;
  DenseLayer head_d_;
  DenseLayer head_s_;
  DenseLayer head_a_;
  Param* w_d_ = nullptr;
  Mlp gate_net_;
  DenseLayer gate_head_;
  Mlp concat_head_;
  std::optional<Cache> cache_;
  Matrix last_gate_;
};

}  // namespace starplus
