// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "starplus/matrix.hpp"

namespace starplus {

/// A mini-batch: one categorical id per field per example (row-major,
/// size() x num_fields), one domain id and one 0/1 label per example.
struct Batch {
  std::size_t num_fields = 0;
  std::vector<std::uint32_t> feature_ids;
  std::vector<std::uint32_t> domains;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return domains.size(); }
  std::span<const std::uint32_t> features_of(std::size_t row) const {
    return {feature_ids.data() + row * num_fields, num_fields};
  }
  /// Ids of one field across the batch.
  std::vector<std::uint32_t> field_column(std::size_t field) const;
  /// Labels as an n x 1 matrix of 0.0/1.0.
  Matrix label_matrix() const;
};

}  // namespace starplus
