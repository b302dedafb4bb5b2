// SPDX-License-Identifier: Apache-2.0

#include "starplus/param.hpp"

#include <cmath>

#include <fmt/format.h>

#include "starplus/error.hpp"

namespace starplus {

bool Param::grad_is_zero() const noexcept {
  for (double g : grad.data()) {
    if (g != 0.0) return false;
  }
  return true;
}

void ParamStore::check_unique(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) {
      throw Error(ErrorCode::config, fmt::format("duplicate parameter name '{}'", name));
    }
  }
  for (const auto& b : buffers_) {
    if (b->name == name) {
      throw Error(ErrorCode::config, fmt::format("duplicate buffer name '{}'", name));
    }
  }
}

Param& ParamStore::add(const std::string& name, std::size_t rows, std::size_t cols) {
  check_unique(name);
  params_.push_back(std::make_unique<Param>(name, rows, cols));
  return *params_.back();
}

Buffer& ParamStore::add_buffer(const std::string& name, std::size_t rows, std::size_t cols,
                               double fill) {
  check_unique(name);
  buffers_.push_back(std::make_unique<Buffer>(name, rows, cols, fill));
  return *buffers_.back();
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Buffer* ParamStore::find_buffer(const std::string& name) {
  for (auto& b : buffers_) {
    if (b->name == name) return b.get();
  }
  return nullptr;
}

std::vector<Param*> ParamStore::params() {
  std::vector<Param*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Param*> ParamStore::params() const {
  std::vector<const Param*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Buffer*> ParamStore::buffers() {
  std::vector<Buffer*> out;
  for (auto& b : buffers_) out.push_back(b.get());
  return out;
}

std::vector<const Buffer*> ParamStore::buffers() const {
  std::vector<const Buffer*> out;
  for (const auto& b : buffers_) out.push_back(b.get());
  return out;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p->grad.fill(0.0);
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void init_xavier_uniform(Param& p, Rng& rng) {
  const double fan_in = static_cast<double>(p.value.rows());
  const double fan_out = static_cast<double>(p.value.cols());
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (double& v : p.value.data()) v = dist(rng);
}

void init_normal(Param& p, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : p.value.data()) v = dist(rng);
}

void init_constant(Param& p, double v) { p.value.fill(v); }

}  // namespace starplus
