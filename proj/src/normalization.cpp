// SPDX-License-Identifier: Apache-2.0

#include "starplus/normalization.hpp"

#include <cmath>

#include <fmt/format.h>

#include "starplus/error.hpp"

namespace starplus {

std::string_view to_string(NormKind kind) {
  switch (kind) {
    case NormKind::none: return "none";
    case NormKind::batch: return "batch";
    case NormKind::layer: return "layer";
    case NormKind::partition: return "partition";
  }
  return "none";
}

NormKind parse_norm_kind(std::string_view text) {
  if (text == "none") return NormKind::none;
  if (text == "batch") return NormKind::batch;
  if (text == "layer") return NormKind::layer;
  if (text == "partition") return NormKind::partition;
  throw Error(ErrorCode::config,
              fmt::format("unknown norm kind '{}' (expected none|batch|layer|partition)", text));
}

std::string_view to_string(PartitionMoments m) {
  return m == PartitionMoments::per_domain ? "per_domain" : "shared";
}

PartitionMoments parse_partition_moments(std::string_view text) {
  if (text == "per_domain") return PartitionMoments::per_domain;
  if (text == "shared") return PartitionMoments::shared;
  throw Error(ErrorCode::config,
              fmt::format("unknown partition moments '{}' (expected per_domain|shared)", text));
}

NormLayer NormLayer::create(ParamStore& store, const std::string& prefix, const NormConfig& cfg) {
  if (cfg.dim == 0) throw Error(ErrorCode::config, "normalization dim must be >= 1");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw Error(ErrorCode::config, fmt::format("norm momentum {} outside [0, 1)", cfg.momentum));
  }
  if (!(cfg.eps > 0.0)) throw Error(ErrorCode::config, "norm eps must be > 0");

  NormLayer layer;
  layer.cfg_ = cfg;
  if (cfg.kind == NormKind::none) return layer;

  layer.gamma_ = &store.add(prefix + "/gamma", 1, cfg.dim);
  layer.beta_ = &store.add(prefix + "/beta", 1, cfg.dim);
  init_constant(*layer.gamma_, 1.0);

  if (cfg.kind == NormKind::partition) {
    layer.gamma_p_ = &store.add(prefix + "/gamma_p", cfg.num_domains, cfg.dim);
    layer.beta_p_ = &store.add(prefix + "/beta_p", cfg.num_domains, cfg.dim);
    init_constant(*layer.gamma_p_, 1.0);
  }
  if (cfg.kind == NormKind::batch || cfg.kind == NormKind::partition) {
    const std::size_t stat_rows =
        cfg.kind == NormKind::partition && cfg.moments == PartitionMoments::per_domain
            ? cfg.num_domains
            : 1;
    layer.running_mean_ = &store.add_buffer(prefix + "/running_mean", stat_rows, cfg.dim, 0.0);
    layer.running_var_ = &store.add_buffer(prefix + "/running_var", stat_rows, cfg.dim, 1.0);
  }
  return layer;
}

std::vector<NormLayer::Group> NormLayer::make_groups(
    std::span<const std::uint32_t> domains) const {
  std::vector<Group> groups;
  if (cfg_.kind == NormKind::partition && cfg_.moments == PartitionMoments::per_domain) {
    std::vector<Group> by_domain(cfg_.num_domains);
    for (std::size_t i = 0; i < domains.size(); ++i) by_domain[domains[i]].rows.push_back(i);
    for (std::size_t d = 0; d < by_domain.size(); ++d) {
      if (by_domain[d].rows.empty()) continue;
      by_domain[d].stat_row = d;
      groups.push_back(std::move(by_domain[d]));
    }
  } else {
    Group all;
    all.rows.resize(domains.size());
    for (std::size_t i = 0; i < domains.size(); ++i) all.rows[i] = i;
    groups.push_back(std::move(all));
  }
  return groups;
}

void NormLayer::normalize_groups(const Matrix& x, Cache& cache) {
  const std::size_t d = x.cols();
  const bool training = cache.mode == NormMode::training;
  std::vector<double> mean(d);
  std::vector<double> var(d);
  for (const Group& g : cache.groups) {
    const std::size_t n = g.rows.size();
    if (training) {
      if (n < 2) {
        throw Error(ErrorCode::degenerate_batch,
                    fmt::format("{} norm: normalization group for domain {} has {} row(s) in "
                                "training mode; at least 2 are required",
                                to_string(cfg_.kind), g.stat_row, n));
      }
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t r : g.rows) s += x(r, j);
        mean[j] = s * inv_n;
        double v = 0.0;
        for (std::size_t r : g.rows) {
          const double c = x(r, j) - mean[j];
          v += c * c;
        }
        var[j] = v * inv_n;
      }
      Matrix& rm = running_mean_->value;
      Matrix& rv = running_var_->value;
      for (std::size_t j = 0; j < d; ++j) {
        rm(g.stat_row, j) = cfg_.momentum * rm(g.stat_row, j) + (1.0 - cfg_.momentum) * mean[j];
        rv(g.stat_row, j) = cfg_.momentum * rv(g.stat_row, j) + (1.0 - cfg_.momentum) * var[j];
      }
    } else {
      for (std::size_t j = 0; j < d; ++j) {
        mean[j] = running_mean_->value(g.stat_row, j);
        var[j] = running_var_->value(g.stat_row, j);
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double inv_std = 1.0 / std::sqrt(var[j] + cfg_.eps);
      for (std::size_t r : g.rows) {
        cache.xhat(r, j) = (x(r, j) - mean[j]) * inv_std;
        cache.inv_std(r, j) = inv_std;
      }
    }
  }
}

void NormLayer::normalize_rows(const Matrix& x, Cache& cache) {
  const std::size_t d = x.cols();
  const double inv_d = 1.0 / static_cast<double>(d);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    double s = 0.0;
    for (double v : row) s += v;
    const double mean = s * inv_d;
    double v2 = 0.0;
    for (double v : row) v2 += (v - mean) * (v - mean);
    const double inv_std = 1.0 / std::sqrt(v2 * inv_d + cfg_.eps);
    for (std::size_t j = 0; j < d; ++j) {
      cache.xhat(i, j) = (row[j] - mean) * inv_std;
      cache.inv_std(i, j) = inv_std;
    }
  }
}

Matrix NormLayer::forward(const Matrix& x, std::span<const std::uint32_t> domains) {
  if (x.rows() != domains.size()) {
    throw Error(ErrorCode::dimension,
                fmt::format("norm: {} rows but {} domain ids", x.rows(), domains.size()));
  }
  if (cfg_.kind == NormKind::none) {
    cache_ = Cache{};
    return x;
  }
  if (x.cols() != cfg_.dim) {
    throw Error(ErrorCode::dimension,
                fmt::format("norm: input {} does not match dim {}", x.shape_string(), cfg_.dim));
  }
  if (cfg_.kind == NormKind::partition) {
    for (std::uint32_t dom : domains) {
      if (dom >= cfg_.num_domains) {
        throw Error(ErrorCode::index, fmt::format("partition norm: domain id {} out of range "
                                                  "for {} domains",
                                                  dom, cfg_.num_domains));
      }
    }
  }

  Cache cache;
  cache.mode = cfg_.kind == NormKind::layer ? NormMode::training : mode_;
  cache.xhat = Matrix(x.rows(), x.cols());
  cache.inv_std = Matrix(x.rows(), x.cols());
  cache.domains.assign(domains.begin(), domains.end());
  if (cfg_.kind == NormKind::layer) {
    normalize_rows(x, cache);
  } else {
    cache.groups = make_groups(domains);
    normalize_groups(x, cache);
  }

  Matrix out(x.rows(), x.cols());
  const Matrix& gamma = gamma_->value;
  const Matrix& beta = beta_->value;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double scale = gamma(0, j);
      double shift = beta(0, j);
      if (gamma_p_ != nullptr) {
        scale = scale * gamma_p_->value(domains[i], j);
        shift = shift + beta_p_->value(domains[i], j);
      }
      out(i, j) = scale * cache.xhat(i, j) + shift;
    }
  }
  cache_ = std::move(cache);
  return out;
}

Matrix NormLayer::backward_groups(const Matrix& dxhat, const Cache& cache) const {
  Matrix dx(dxhat.rows(), dxhat.cols());
  if (cache.mode == NormMode::inference) {
    for (std::size_t i = 0; i < dx.rows(); ++i) {
      for (std::size_t j = 0; j < dx.cols(); ++j) dx(i, j) = dxhat(i, j) * cache.inv_std(i, j);
    }
    return dx;
  }
  for (const Group& g : cache.groups) {
    const double n = static_cast<double>(g.rows.size());
    for (std::size_t j = 0; j < dx.cols(); ++j) {
      double sum_d = 0.0;
      double sum_dx = 0.0;
      for (std::size_t r : g.rows) {
        sum_d += dxhat(r, j);
        sum_dx += dxhat(r, j) * cache.xhat(r, j);
      }
      for (std::size_t r : g.rows) {
        dx(r, j) = cache.inv_std(r, j) / n *
                   (n * dxhat(r, j) - sum_d - cache.xhat(r, j) * sum_dx);
      }
    }
  }
  return dx;
}

Matrix NormLayer::backward_rows(const Matrix& dxhat, const Cache& cache) const {
  Matrix dx(dxhat.rows(), dxhat.cols());
  const double n = static_cast<double>(dxhat.cols());
  for (std::size_t i = 0; i < dx.rows(); ++i) {
    double sum_d = 0.0;
    double sum_dx = 0.0;
    for (std::size_t j = 0; j < dx.cols(); ++j) {
      sum_d += dxhat(i, j);
      sum_dx += dxhat(i, j) * cache.xhat(i, j);
    }
    for (std::size_t j = 0; j < dx.cols(); ++j) {
      dx(i, j) = cache.inv_std(i, j) / n * (n * dxhat(i, j) - sum_d - cache.xhat(i, j) * sum_dx);
    }
  }
  return dx;
}

Matrix NormLayer::backward(const Matrix& upstream) {
  if (!cache_) throw Error(ErrorCode::state, "norm: backward called without a matching forward");
  Cache cache = std::move(*cache_);
  cache_.reset();
  if (cfg_.kind == NormKind::none) return upstream;
  if (!upstream.same_shape(cache.xhat)) {
    throw Error(ErrorCode::dimension,
                fmt::format("norm: upstream {} does not match output {}", upstream.shape_string(),
                            cache.xhat.shape_string()));
  }

  const std::size_t rows = upstream.rows();
  const std::size_t cols = upstream.cols();
  Matrix dxhat(rows, cols);
  Matrix dgamma(1, cols);
  Matrix dbeta(1, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::uint32_t dom = cache.domains[i];
    for (std::size_t j = 0; j < cols; ++j) {
      const double g = upstream(i, j);
      double scale = gamma_->value(0, j);
      if (gamma_p_ != nullptr) {
        const double gp = gamma_p_->value(dom, j);
        scale = scale * gp;
        dgamma(0, j) += g * cache.xhat(i, j) * gp;
        gamma_p_->grad(dom, j) += g * cache.xhat(i, j) * gamma_->value(0, j);
        beta_p_->grad(dom, j) += g;
      } else {
        dgamma(0, j) += g * cache.xhat(i, j);
      }
      dbeta(0, j) += g;
      dxhat(i, j) = g * scale;
    }
  }
  add_inplace(gamma_->grad, dgamma);
  add_inplace(beta_->grad, dbeta);

  return cfg_.kind == NormKind::layer ? backward_rows(dxhat, cache)
                                      : backward_groups(dxhat, cache);
}

}  // namespace starplus
