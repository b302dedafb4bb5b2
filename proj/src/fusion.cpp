// SPDX-License-Identifier: Apache-2.0

#include "starplus/fusion.hpp"

#include <cmath>

#include <fmt/format.h>

#include "starplus/error.hpp"
#include "starplus/loss.hpp"

namespace starplus {

namespace {

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row(i);
    double mx = in[0];
    for (double v : in) mx = std::max(mx, v);
    double s = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out(i, j) = std::exp(in[j] - mx);
      s += out(i, j);
    }
    for (std::size_t j = 0; j < in.size(); ++j) out(i, j) /= s;
  }
  return out;
}

/// Cache-free evaluation of an Mlp.
Matrix evaluate(const Mlp& mlp, const Matrix& x) {
  Matrix h = x;
  for (const DenseLayer& layer : mlp.layers()) {
    Matrix pre = matmul(h, layer.weight().value);
    add_row_vector(pre, layer.bias().value);
    h = activate(pre, layer.activation());
  }
  return h;
}

Matrix scale_rows(const Matrix& m, const Matrix& weights, std::size_t col) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double w = weights(i, col);
    for (double& v : out.row(i)) v *= w;
  }
  return out;
}

}  // namespace

std::string_view to_string(FusionType type) {
  switch (type) {
    case FusionType::builtin: return "builtin";
    case FusionType::add: return "add";
    case FusionType::adaptive_add: return "adaptive_add";
    case FusionType::gate: return "gate";
    case FusionType::concat: return "concat";
  }
  return "builtin";
}

FusionType parse_fusion_type(std::string_view text) {
  if (text == "builtin") return FusionType::builtin;
  if (text == "add") return FusionType::add;
  if (text == "adaptive_add") return FusionType::adaptive_add;
  if (text == "gate") return FusionType::gate;
  if (text == "concat") return FusionType::concat;
  throw Error(ErrorCode::config,
              fmt::format("unknown fusion '{}' (expected builtin|add|adaptive_add|gate|concat)",
                          text));
}

void FusionConfig::validate() const {
  if (!std::isfinite(c_d) || !std::isfinite(c_s) || !std::isfinite(c_a)) {
    throw Error(ErrorCode::config, "add fusion constants must be finite");
  }
  if (type == FusionType::gate && gate_hidden == 0) {
    throw Error(ErrorCode::config, "gate_hidden must be >= 1");
  }
  for (std::size_t w : concat_head_widths) {
    if (w == 0) throw Error(ErrorCode::config, "concat head widths must be >= 1");
  }
}

std::array<double, 3> adaptive_constants(double w) noexcept {
  const double c_d = sigmoid(w);
  const double rest = (1.0 - c_d) / 2.0;
  return {c_d, rest, rest};
}

Fusion Fusion::create(ParamStore& store, const std::string& prefix, const FusionConfig& cfg,
                      std::size_t tower_dim, std::size_t num_domains, Rng& rng) {
  cfg.validate();
  if (cfg.type == FusionType::builtin) {
    throw Error(ErrorCode::config, "the builtin combination belongs to the Star architecture");
  }
  Fusion f;
  f.cfg_ = cfg;
  f.tower_dim_ = tower_dim;
  f.num_domains_ = num_domains;
  switch (cfg.type) {
    case FusionType::adaptive_add:
      f.w_d_ = &store.add(prefix + "/w_d", num_domains, 1);
      [[fallthrough]];
    case FusionType::add:
      f.head_d_ = DenseLayer::create(store, prefix + "/head_d", tower_dim, 1,
                                     Activation::identity, rng);
      f.head_s_ = DenseLayer::create(store, prefix + "/head_s", tower_dim, 1,
                                     Activation::identity, rng);
      f.head_a_ = DenseLayer::create(store, prefix + "/head_a", tower_dim, 1,
                                     Activation::identity, rng);
      break;
    case FusionType::gate: {
      const std::array<std::size_t, 1> hidden{cfg.gate_hidden};
      f.gate_net_ = Mlp::create(store, prefix + "/gate", num_domains, hidden, 3,
                                Activation::identity, rng);
      f.gate_head_ = DenseLayer::create(store, prefix + "/gate_head", tower_dim, 1,
                                        Activation::identity, rng);
      break;
    }
    case FusionType::concat:
      f.concat_head_ = Mlp::create(store, prefix + "/concat", 3 * tower_dim,
                                   cfg.concat_head_widths, 1, Activation::identity, rng);
      break;
    case FusionType::builtin:
      break;
  }
  return f;
}

Matrix Fusion::one_hot(std::span<const std::uint32_t> domains) const {
  Matrix out(domains.size(), num_domains_);
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (domains[i] >= num_domains_) {
      throw Error(ErrorCode::index, fmt::format("fusion: domain id {} out of range for {} domains",
                                                domains[i], num_domains_));
    }
    out(i, domains[i]) = 1.0;
  }
  return out;
}

Matrix Fusion::forward(const TowerOutputs& towers, std::span<const std::uint32_t> domains) {
  const std::size_t n = towers.s_d.rows();
  if (!towers.s_d.same_shape(towers.s_s) || !towers.s_d.same_shape(towers.s_a) ||
      towers.s_d.cols() != tower_dim_ || domains.size() != n) {
    throw Error(ErrorCode::dimension,
                fmt::format("fusion: tower outputs {}, {}, {} with {} domain ids do not match "
                            "tower dim {}",
                            towers.s_d.shape_string(), towers.s_s.shape_string(),
                            towers.s_a.shape_string(), domains.size(), tower_dim_));
  }
  Cache cache;
  cache.domains.assign(domains.begin(), domains.end());
  cache.towers = towers;
  Matrix logits(n, 1);

  switch (cfg_.type) {
    case FusionType::add:
    case FusionType::adaptive_add: {
      const Matrix hd = head_d_.forward(towers.s_d);
      const Matrix hs = head_s_.forward(towers.s_s);
      const Matrix ha = head_a_.forward(towers.s_a);
      cache.head_out = Matrix(n, 3);
      cache.constants = Matrix(n, 3);
      for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 3> c{cfg_.c_d, cfg_.c_s, cfg_.c_a};
        if (cfg_.type == FusionType::adaptive_add) {
          if (domains[i] >= num_domains_) {
            throw Error(ErrorCode::index,
                        fmt::format("fusion: domain id {} out of range for {} domains", domains[i],
                                    num_domains_));
          }
          c = adaptive_constants(w_d_->value(domains[i], 0));
        }
        cache.head_out(i, 0) = hd(i, 0);
        cache.head_out(i, 1) = hs(i, 0);
        cache.head_out(i, 2) = ha(i, 0);
        for (std::size_t t = 0; t < 3; ++t) cache.constants(i, t) = c[t];
        logits(i, 0) = c[0] * hd(i, 0) + c[1] * hs(i, 0) + c[2] * ha(i, 0);
      }
      break;
    }
    case FusionType::gate: {
      cache.gate = softmax_rows(gate_net_.forward(one_hot(domains)));
      last_gate_ = cache.gate;
      Matrix fused(n, tower_dim_);
      for (std::size_t i = 0; i < n; ++i) {
        const double g0 = cache.gate(i, 0);
        const double g1 = cache.gate(i, 1);
        const double g2 = cache.gate(i, 2);
        for (std::size_t j = 0; j < tower_dim_; ++j) {
          fused(i, j) = g0 * towers.s_d(i, j) + g1 * towers.s_s(i, j) + g2 * towers.s_a(i, j);
        }
      }
      logits = gate_head_.forward(fused);
      break;
    }
    case FusionType::concat: {
      const std::array<const Matrix*, 3> parts{&towers.s_d, &towers.s_s, &towers.s_a};
      logits = concat_head_.forward(hconcat(parts));
      break;
    }
    case FusionType::builtin:
      throw Error(ErrorCode::state, "fusion: builtin combination has no forward");
  }
  cache_ = std::move(cache);
  return logits;
}

TowerOutputs Fusion::backward(const Matrix& dlogits) {
  if (!cache_) throw Error(ErrorCode::state, "fusion: backward called without a matching forward");
  Cache cache = std::move(*cache_);
  cache_.reset();
  const std::size_t n = cache.towers.s_d.rows();
  if (dlogits.rows() != n || dlogits.cols() != 1) {
    throw Error(ErrorCode::dimension,
                fmt::format("fusion: upstream {} does not match {}x1", dlogits.shape_string(), n));
  }
  TowerOutputs grads;

  switch (cfg_.type) {
    case FusionType::add:
    case FusionType::adaptive_add: {
      Matrix gd(n, 1);
      Matrix gs(n, 1);
      Matrix ga(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        const double g = dlogits(i, 0);
        gd(i, 0) = g * cache.constants(i, 0);
        gs(i, 0) = g * cache.constants(i, 1);
        ga(i, 0) = g * cache.constants(i, 2);
        if (cfg_.type == FusionType::adaptive_add) {
          // d logit / d w = c_d (1 - c_d) * (h_d - (h_s + h_a) / 2)
          const double c_d = cache.constants(i, 0);
          const double spread = cache.head_out(i, 0) - 0.5 * (cache.head_out(i, 1) +
                                                               cache.head_out(i, 2));
          w_d_->grad(cache.domains[i], 0) += g * c_d * (1.0 - c_d) * spread;
        }
      }
      grads.s_d = head_d_.backward(gd);
      grads.s_s = head_s_.backward(gs);
      grads.s_a = head_a_.backward(ga);
      break;
    }
    case FusionType::gate: {
      const Matrix dfused = gate_head_.backward(dlogits);
      grads.s_d = scale_rows(dfused, cache.gate, 0);
      grads.s_s = scale_rows(dfused, cache.gate, 1);
      grads.s_a = scale_rows(dfused, cache.gate, 2);
      const std::array<const Matrix*, 3> towers{&cache.towers.s_d, &cache.towers.s_s,
                                                &cache.towers.s_a};
      Matrix dgate_logits(n, 3);
      for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 3> dg{};
        for (std::size_t t = 0; t < 3; ++t) {
          auto s = towers[t]->row(i);
          auto d = dfused.row(i);
          double acc = 0.0;
          for (std::size_t j = 0; j < s.size(); ++j) acc += d[j] * s[j];
          dg[t] = acc;
        }
        const double dot = cache.gate(i, 0) * dg[0] + cache.gate(i, 1) * dg[1] +
                           cache.gate(i, 2) * dg[2];
        for (std::size_t t = 0; t < 3; ++t) dgate_logits(i, t) = cache.gate(i, t) * (dg[t] - dot);
      }
      gate_net_.backward(dgate_logits);
      break;
    }
    case FusionType::concat: {
      const Matrix dcat = concat_head_.backward(dlogits);
      grads.s_d = column_slice(dcat, 0, tower_dim_);
      grads.s_s = column_slice(dcat, tower_dim_, tower_dim_);
      grads.s_a = column_slice(dcat, 2 * tower_dim_, tower_dim_);
      break;
    }
    case FusionType::builtin:
      throw Error(ErrorCode::state, "fusion: builtin combination has no backward");
  }
  return grads;
}

std::array<double, 3> Fusion::domain_constants(std::uint32_t domain) const {
  if (cfg_.type != FusionType::adaptive_add) {
    if (cfg_.type == FusionType::add) return {cfg_.c_d, cfg_.c_s, cfg_.c_a};
    throw Error(ErrorCode::state, "fusion: domain constants exist only for add kinds");
  }
  if (domain >= num_domains_) {
    throw Error(ErrorCode::index, fmt::format("fusion: domain id {} out of range", domain));
  }
  return adaptive_constants(w_d_->value(domain, 0));
}

const Matrix& Fusion::last_gate_weights() const {
  if (cfg_.type != FusionType::gate || last_gate_.empty()) {
    throw Error(ErrorCode::state, "fusion: no gate weights cached");
  }
  return last_gate_;
}

Matrix Fusion::gate_weights(std::span<const std::uint32_t> domains) const {
  if (cfg_.type != FusionType::gate) throw Error(ErrorCode::state, "fusion: not a gate fusion");
  return softmax_rows(evaluate(gate_net_, one_hot(domains)));
}

}  // namespace starplus
