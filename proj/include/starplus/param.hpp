// SPDX-License-Identifier: Apache-2.0
//
// Learnable tensors and the registry that owns them.

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "starplus/matrix.hpp"

namespace starplus {

using Rng = std::mt19937_64;

struct Param {
  Param(std::string name_, std::size_t rows, std::size_t cols)
      : name(std::move(name_)),
        value(rows, cols),
        grad(rows, cols),
        m1(rows, cols),
        m2(rows, cols) {}

  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m1;
  Matrix m2;
  std::uint64_t step_count = 0;

  bool grad_is_zero() const noexcept;
};

/// Non-learnable named state (running statistics).
struct Buffer {
  Buffer(std::string name_, std::size_t rows, std::size_t cols, double fill)
      : name(std::move(name_)), value(rows, cols, fill) {}

  std::string name;
  Matrix value;
};

/// Owns every Param and Buffer of a model. Addresses are stable for the
/// lifetime of the store, so layers keep raw non-owning pointers.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  /// Throws on duplicate names (shared namespace with buffers).
  Param& add(const std::string& name, std::size_t rows, std::size_t cols);
  Buffer& add_buffer(const std::string& name, std::size_t rows, std::size_t cols, double fill);

  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  Buffer* find_buffer(const std::string& name);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::vector<Buffer*> buffers();
  std::vector<const Buffer*> buffers() const;

  void zero_grads();
  std::size_t parameter_count() const;

 private:
  void check_unique(const std::string& name) const;

  std::vector<std::unique_ptr<Param>> params_;
  std::vector<std::unique_ptr<Buffer>> buffers_;
};

/// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), fans from the shape.
void init_xavier_uniform(Param& p, Rng& rng);
void init_normal(Param& p, double stddev, Rng& rng);
void init_constant(Param& p, double v);

}  // namespace starplus
