// SPDX-License-Identifier: Apache-2.0

#include "starplus/layers.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "starplus/error.hpp"

namespace starplus {

namespace {

struct ProbeState {
  int depth = 0;
  std::uint64_t hash = 1469598103934665603ULL;
  double min_abs = std::numeric_limits<double>::infinity();
};

thread_local ProbeState probe_state;

constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

}  // namespace

ActivationProbe::ActivationProbe() {
  ++probe_state.depth;
  reset();
}

ActivationProbe::~ActivationProbe() { --probe_state.depth; }

void ActivationProbe::reset() {
  probe_state.hash = 1469598103934665603ULL;
  probe_state.min_abs = std::numeric_limits<double>::infinity();
}

std::uint64_t ActivationProbe::signature() const { return probe_state.hash; }

double ActivationProbe::min_abs_preactivation() const { return probe_state.min_abs; }

void ActivationProbe::record(const Matrix& pre) {
  if (probe_state.depth == 0) return;
  for (double v : pre.data()) {
    probe_state.hash = (probe_state.hash ^ (v > 0.0 ? 0x9eULL : 0x3cULL)) * kFnvPrime;
    probe_state.min_abs = std::min(probe_state.min_abs, std::abs(v));
  }
}

Matrix activate(const Matrix& pre, Activation act) {
  if (act == Activation::identity) return pre;
  ActivationProbe::record(pre);
  Matrix out = pre;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix activation_backward(const Matrix& upstream, const Matrix& pre, Activation act) {
  if (act == Activation::identity) return upstream;
  Matrix out = upstream;
  auto p = pre.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (!(p[i] > 0.0)) o[i] = 0.0;
  }
  return out;
}

DenseLayer DenseLayer::create(ParamStore& store, const std::string& prefix, std::size_t in_dim,
                              std::size_t out_dim, Activation act, Rng& rng) {
  Param& w = store.add(prefix + "/weight", in_dim, out_dim);
  Param& b = store.add(prefix + "/bias", 1, out_dim);
  init_xavier_uniform(w, rng);
  init_constant(b, 0.0);
  return DenseLayer(w, b, act);
}

Matrix DenseLayer::forward(const Matrix& x) {
  if (x.cols() != in_dim()) {
    throw Error(ErrorCode::dimension,
                fmt::format("dense '{}': input {} does not match weight {}", weight_->name,
                            x.shape_string(), weight_->value.shape_string()));
  }
  Matrix pre = matmul(x, weight_->value);
  add_row_vector(pre, bias_->value);
  Matrix out = activate(pre, act_);
  cache_ = Cache{x, std::move(pre)};
  return out;
}

Matrix DenseLayer::backward(const Matrix& upstream) {
  if (!cache_) {
    throw Error(ErrorCode::state,
                fmt::format("dense '{}': backward called without a matching forward",
                            weight_->name));
  }
  if (!upstream.same_shape(cache_->pre)) {
    throw Error(ErrorCode::dimension,
                fmt::format("dense '{}': upstream {} does not match output {}", weight_->name,
                            upstream.shape_string(), cache_->pre.shape_string()));
  }
  Matrix g = activation_backward(upstream, cache_->pre, act_);
  add_inplace(weight_->grad, matmul_at_b(cache_->input, g));
  add_inplace(bias_->grad, column_sums(g));
  Matrix dx = matmul_a_bt(g, weight_->value);
  cache_.reset();
  return dx;
}

Mlp Mlp::create(ParamStore& store, const std::string& prefix, std::size_t in_dim,
                std::span<const std::size_t> hidden, std::size_t out_dim, Activation output_act,
                Rng& rng) {
  Mlp mlp;
  std::size_t width = in_dim;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    mlp.layers_.push_back(DenseLayer::create(store, fmt::format("{}/dense{}", prefix, i), width,
                                             hidden[i], Activation::relu, rng));
    width = hidden[i];
  }
  mlp.layers_.push_back(DenseLayer::create(store, fmt::format("{}/dense{}", prefix, hidden.size()),
                                           width, out_dim, output_act, rng));
  return mlp;
}

Matrix Mlp::forward(const Matrix& x) {
  Matrix h = x;
  for (auto& layer : layers_) h = layer.forward(h);
  return h;
}

Matrix Mlp::backward(const Matrix& upstream) {
  Matrix g = upstream;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->backward(g);
  return g;
}

EmbeddingTable EmbeddingTable::create(ParamStore& store, const std::string& prefix,
                                      const std::string& field, std::size_t vocab,
                                      std::size_t dim, double stddev, Rng& rng) {
  Param& table = store.add(prefix, vocab, dim);
  init_normal(table, stddev, rng);
  return EmbeddingTable(field, table);
}

Matrix EmbeddingTable::forward(std::span<const std::uint32_t> ids) {
  Matrix out(ids.size(), dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab_size()) {
      throw Error(ErrorCode::index,
                  fmt::format("field '{}': id {} out of range for vocab size {}", field_, ids[i],
                              vocab_size()));
    }
    auto src = table_->value.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  cached_ids_.emplace(ids.begin(), ids.end());
  return out;
}

void EmbeddingTable::backward(const Matrix& upstream) {
  if (!cached_ids_) {
    throw Error(ErrorCode::state,
                fmt::format("embedding '{}': backward called without a matching forward", field_));
  }
  const auto& ids = *cached_ids_;
  if (upstream.rows() != ids.size() || upstream.cols() != dim()) {
    throw Error(ErrorCode::dimension,
                fmt::format("embedding '{}': upstream {} does not match {}x{}", field_,
                            upstream.shape_string(), ids.size(), dim()));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto src = upstream.row(i);
    auto dst = table_->grad.row(ids[i]);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }
  cached_ids_.reset();
}

}  // namespace starplus
