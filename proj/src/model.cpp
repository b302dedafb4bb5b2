// SPDX-License-Identifier: Apache-2.0

#include "starplus/model.hpp"

#include <fmt/format.h>

#include "starplus/error.hpp"
#include "starplus/loss.hpp"

namespace starplus {

namespace {

constexpr double kEmbeddingStddev = 0.01;

Matrix negated(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v = -v;
  return out;
}

void scatter_add_rows(Matrix& dst, const Matrix& src, std::span<const std::size_t> rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto s = src.row(i);
    auto d = dst.row(rows[i]);
    for (std::size_t j = 0; j < s.size(); ++j) d[j] += s[j];
  }
}

}  // namespace

StarLayer::StarLayer(DenseLayer& domain, DenseLayer& shared)
    : w_d_(&domain.weight()),
      b_d_(&domain.bias()),
      w_s_(&shared.weight()),
      b_s_(&shared.bias()),
      act_(domain.activation()) {
  if (!w_d_->value.same_shape(w_s_->value) || !b_d_->value.same_shape(b_s_->value) ||
      domain.activation() != shared.activation()) {
    throw Error(ErrorCode::config,
                fmt::format("star layer: domain '{}' {} and shared '{}' {} differ in shape",
                            w_d_->name, w_d_->value.shape_string(), w_s_->name,
                            w_s_->value.shape_string()));
  }
}

Matrix StarLayer::combined_weight() const {
  Matrix w = w_d_->value;
  auto ws = w_s_->value.data();
  auto out = w.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * ws[i];
  return w;
}

Matrix StarLayer::combined_bias() const {
  Matrix b = b_d_->value;
  add_inplace(b, b_s_->value);
  return b;
}

Matrix StarLayer::forward(const Matrix& x) {
  if (x.cols() != w_d_->value.rows()) {
    throw Error(ErrorCode::dimension,
                fmt::format("star layer '{}': input {} does not match weight {}", w_d_->name,
                            x.shape_string(), w_d_->value.shape_string()));
  }
  Matrix weight = combined_weight();
  Matrix pre = matmul(x, weight);
  add_row_vector(pre, combined_bias());
  Matrix out = activate(pre, act_);
  cache_ = Cache{x, std::move(pre), std::move(weight)};
  return out;
}

Matrix StarLayer::backward(const Matrix& upstream) {
  if (!cache_) {
    throw Error(ErrorCode::state,
                fmt::format("star layer '{}': backward without forward", w_d_->name));
  }
  Cache cache = std::move(*cache_);
  cache_.reset();
  const Matrix g = activation_backward(upstream, cache.pre, act_);
  const Matrix dw = matmul_at_b(cache.input, g);
  auto dwv = dw.data();
  auto wd = w_d_->value.data();
  auto ws = w_s_->value.data();
  auto gd = w_d_->grad.data();
  auto gs = w_s_->grad.data();
  for (std::size_t i = 0; i < dwv.size(); ++i) {
    gd[i] += dwv[i] * ws[i];
    gs[i] += dwv[i] * wd[i];
  }
  const Matrix db = column_sums(g);
  add_inplace(b_d_->grad, db);
  add_inplace(b_s_->grad, db);
  return matmul_a_bt(g, cache.weight);
}

StarTower::StarTower(Mlp& domain, Mlp& shared) {
  if (domain.layers().size() != shared.layers().size()) {
    throw Error(ErrorCode::config, "star tower: domain and shared stacks differ in depth");
  }
  for (std::size_t i = 0; i < domain.layers().size(); ++i) {
    layers_.emplace_back(domain.layers()[i], shared.layers()[i]);
  }
}

Matrix StarTower::forward(const Matrix& x) {
  Matrix h = x;
  for (auto& layer : layers_) h = layer.forward(h);
  return h;
}

Matrix StarTower::backward(const Matrix& upstream) {
  Matrix g = upstream;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->backward(g);
  return g;
}

Matrix star_final_score(const Matrix& s_star, const Matrix& s_a) {
  if (!s_star.same_shape(s_a) || s_star.cols() != 1) {
    throw Error(ErrorCode::dimension,
                fmt::format("star_final_score: {} and {} must both be n x 1",
                            s_star.shape_string(), s_a.shape_string()));
  }
  Matrix out(s_star.rows(), 1);
  for (std::size_t i = 0; i < out.rows(); ++i) out(i, 0) = sigmoid(s_star(i, 0) + s_a(i, 0));
  return out;
}

MultiDomainModel::MultiDomainModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  const std::size_t input_dim = config_.input_dim();
  const std::size_t out_dim = config_.tower_dim();

  for (const FieldSpec& f : config_.fields) {
    embeddings_.push_back(EmbeddingTable::create(store_, "embedding/" + f.name, f.name,
                                                 f.vocab_size, f.embedding_dim,
                                                 kEmbeddingStddev, rng));
  }
  domain_embedding_ =
      EmbeddingTable::create(store_, "domain_embedding", "domain", config_.num_domains,
                             config_.domain_embedding_dim, kEmbeddingStddev, rng);

  NormConfig norm_cfg;
  norm_cfg.kind = config_.norm;
  norm_cfg.dim = input_dim;
  norm_cfg.num_domains = config_.num_domains;
  norm_cfg.momentum = config_.norm_momentum;
  norm_cfg.eps = config_.norm_eps;
  norm_cfg.moments = config_.partition_moments;
  norm_ = NormLayer::create(store_, "norm", norm_cfg);

  for (std::size_t d = 0; d < config_.num_domains; ++d) {
    domain_towers_.push_back(Mlp::create(store_, fmt::format("tower/domain{}", d), input_dim,
                                         config_.tower_widths, out_dim, Activation::identity,
                                         rng));
  }
  shared_tower_ = Mlp::create(store_, "tower/shared", input_dim, config_.tower_widths, out_dim,
                              Activation::identity, rng);
  aux_tower_ = Mlp::create(store_, "tower/aux", input_dim + config_.domain_embedding_dim,
                           config_.tower_widths, out_dim, Activation::identity, rng);

  if (config_.architecture == Architecture::star) {
    // Domain factors start at the multiplicative identity, so each domain
    // initially runs the shared weights.
    for (Mlp& tower : domain_towers_) {
      for (DenseLayer& layer : tower.layers()) {
        init_constant(layer.weight(), 1.0);
        init_constant(layer.bias(), 0.0);
      }
    }
    for (Mlp& tower : domain_towers_) star_towers_.emplace_back(tower, shared_tower_);
  } else {
    fusion_ = Fusion::create(store_, "fusion", config_.fusion, out_dim, config_.num_domains, rng);
  }
}

std::vector<MultiDomainModel::Route> MultiDomainModel::route(
    std::span<const std::uint32_t> domains) const {
  std::vector<Route> by_domain(config_.num_domains);
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (domains[i] >= config_.num_domains) {
      throw Error(ErrorCode::index, fmt::format("domain id {} at row {} out of range for {} "
                                                "domains",
                                                domains[i], i, config_.num_domains));
    }
    by_domain[domains[i]].rows.push_back(i);
  }
  std::vector<Route> routes;
  for (std::size_t d = 0; d < by_domain.size(); ++d) {
    if (by_domain[d].rows.empty()) continue;
    by_domain[d].domain = d;
    routes.push_back(std::move(by_domain[d]));
  }
  return routes;
}

Matrix MultiDomainModel::assemble_input(const Batch& batch) {
  if (batch.num_fields != embeddings_.size()) {
    throw Error(ErrorCode::dimension,
                fmt::format("batch has {} fields, model expects {}", batch.num_fields,
                            embeddings_.size()));
  }
  std::vector<Matrix> parts;
  parts.reserve(embeddings_.size());
  for (std::size_t f = 0; f < embeddings_.size(); ++f) {
    const auto ids = batch.field_column(f);
    parts.push_back(embeddings_[f].forward(ids));
  }
  std::vector<const Matrix*> ptrs;
  for (const Matrix& m : parts) ptrs.push_back(&m);
  return hconcat(ptrs);
}

void MultiDomainModel::input_backward(const Matrix& dx) {
  std::size_t offset = 0;
  for (EmbeddingTable& table : embeddings_) {
    table.backward(column_slice(dx, offset, table.dim()));
    offset += table.dim();
  }
}

Matrix MultiDomainModel::aux_forward(const Matrix& z, std::span<const std::uint32_t> domains) {
  const Matrix dom = domain_embedding_.forward(domains);
  const std::array<const Matrix*, 2> parts{&z, &dom};
  return aux_tower_.forward(hconcat(parts));
}

Matrix MultiDomainModel::aux_backward(const Matrix& ds_a) {
  const Matrix dcat = aux_tower_.backward(ds_a);
  const std::size_t d = config_.input_dim();
  domain_embedding_.backward(column_slice(dcat, d, config_.domain_embedding_dim));
  return column_slice(dcat, 0, d);
}

Matrix MultiDomainModel::star_combined_forward(const Matrix& z,
                                               std::span<const std::uint32_t> domains) {
  if (config_.architecture != Architecture::star) {
    throw Error(ErrorCode::config, "star_combined_forward requires the star architecture");
  }
  routes_ = route(domains);
  routed_rows_ = z.rows();
  Matrix out(z.rows(), 1);
  for (const Route& r : routes_) {
    scatter_rows(out, star_towers_[r.domain].forward(gather_rows(z, r.rows)), r.rows);
  }
  return out;
}

TowerOutputs MultiDomainModel::star_plus_forward(const Matrix& z,
                                                 std::span<const std::uint32_t> domains) {
  if (config_.architecture != Architecture::star_plus) {
    throw Error(ErrorCode::config, "star_plus_forward requires the star_plus architecture");
  }
  routes_ = route(domains);
  routed_rows_ = z.rows();
  TowerOutputs out;
  out.s_d = Matrix(z.rows(), config_.tower_output_dim);
  for (const Route& r : routes_) {
    scatter_rows(out.s_d, domain_towers_[r.domain].forward(gather_rows(z, r.rows)), r.rows);
  }
  out.s_s = shared_tower_.forward(z);
  out.s_a = aux_forward(z, domains);
  return out;
}

Matrix MultiDomainModel::star_plus_backward(const TowerOutputs& grads) {
  const Matrix ds_s = backward_fault_ ? negated(grads.s_s) : grads.s_s;
  Matrix dz = shared_tower_.backward(ds_s);
  add_inplace(dz, aux_backward(grads.s_a));
  for (const Route& r : routes_) {
    scatter_add_rows(dz, domain_towers_[r.domain].backward(gather_rows(grads.s_d, r.rows)),
                     r.rows);
  }
  return dz;
}

Matrix MultiDomainModel::star_backward(const Matrix& ds_star, const Matrix& ds_a) {
  Matrix dz = aux_backward(backward_fault_ ? negated(ds_a) : ds_a);
  for (const Route& r : routes_) {
    scatter_add_rows(dz, star_towers_[r.domain].backward(gather_rows(ds_star, r.rows)), r.rows);
  }
  return dz;
}

Matrix MultiDomainModel::forward(const Batch& batch) {
  if (batch.size() == 0) throw Error(ErrorCode::validation, "forward on an empty batch");
  const Matrix x = assemble_input(batch);
  const Matrix z = norm_.forward(x, batch.domains);
  if (config_.architecture == Architecture::star) {
    Matrix logits = star_combined_forward(z, batch.domains);
    add_inplace(logits, aux_forward(z, batch.domains));
    return logits;
  }
  return fusion_.forward(star_plus_forward(z, batch.domains), batch.domains);
}

void MultiDomainModel::backward(const Matrix& dlogits) {
  if (dlogits.rows() != routed_rows_ || dlogits.cols() != 1) {
    throw Error(ErrorCode::dimension,
                fmt::format("model backward: upstream {} does not match {}x1",
                            dlogits.shape_string(), routed_rows_));
  }
  Matrix dz = config_.architecture == Architecture::star
                  ? star_backward(dlogits, dlogits)
                  : star_plus_backward(fusion_.backward(dlogits));
  input_backward(norm_.backward(dz));
}

Matrix MultiDomainModel::predict(const Batch& batch) {
  const NormMode previous = mode();
  set_mode(NormMode::inference);
  Matrix logits;
  try {
    logits = forward(batch);
  } catch (...) {
    set_mode(previous);
    throw;
  }
  set_mode(previous);
  for (double& v : logits.data()) v = sigmoid(v);
  return logits;
}

TensorFile MultiDomainModel::to_tensor_file() const {
  TensorFile file;
  file.kind = "checkpoint";
  for (const auto& [k, v] : config_.to_manifest()) file.set_meta(k, v);
  file.set_meta("norm_mode", "inference");
  file.set_meta("parameter_count", std::to_string(store_.parameter_count()));
  for (const Param* p : store_.params()) file.tensors.emplace_back(p->name, p->value);
  for (const Buffer* b : store_.buffers()) file.tensors.emplace_back(b->name, b->value);
  return file;
}

MultiDomainModel MultiDomainModel::from_tensor_file(const TensorFile& file,
                                                    const ModelConfig* expected) {
  if (file.kind != "checkpoint") {
    throw Error(ErrorCode::schema,
                fmt::format("expected a checkpoint, found tensor file of kind '{}'", file.kind));
  }
  ModelConfig cfg = ModelConfig::from_manifest(file.meta);
  if (expected != nullptr) {
    const auto differences = expected->diff(cfg);
    if (!differences.empty()) {
      throw Error(ErrorCode::schema, fmt::format("checkpoint does not match the expected model: {}",
                                                 fmt::join(differences, "; ")));
    }
  }
  MultiDomainModel model(cfg);
  std::size_t consumed = 0;
  auto restore = [&](const std::string& name, Matrix& dst) {
    const Matrix* src = file.find_tensor(name);
    if (src == nullptr) {
      throw Error(ErrorCode::schema, fmt::format("checkpoint is missing tensor '{}'", name));
    }
    if (!src->same_shape(dst)) {
      throw Error(ErrorCode::schema, fmt::format("tensor '{}': expected shape {}, found {}", name,
                                                 dst.shape_string(), src->shape_string()));
    }
    dst = *src;
    ++consumed;
  };
  for (Param* p : model.store_.params()) restore(p->name, p->value);
  for (Buffer* b : model.store_.buffers()) restore(b->name, b->value);
  if (consumed != file.tensors.size()) {
    throw Error(ErrorCode::schema,
                fmt::format("checkpoint holds {} tensors, model defines {}", file.tensors.size(),
                            consumed));
  }
  model.set_mode(NormMode::inference);
  return model;
}

void MultiDomainModel::save(const std::filesystem::path& path) const {
  write_tensor_file(path, to_tensor_file());
}

MultiDomainModel MultiDomainModel::load(const std::filesystem::path& path,
                                        const ModelConfig* expected) {
  return from_tensor_file(read_tensor_file(path), expected);
}

}  // namespace starplus
