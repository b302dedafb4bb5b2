// SPDX-License-Identifier: Apache-2.0
//
// In-memory multi-domain dataset (columnar), deterministic batching and the
// binary dataset cache.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "starplus/batch.hpp"

namespace starplus {

struct DataField {
  std::string name;
  std::size_t vocab_size = 0;

  friend bool operator==(const DataField&, const DataField&) = default;
};

struct Dataset {
  std::vector<DataField> fields;
  /// Display/CSV token of each domain; size() is the number of domains.
  std::vector<std::string> domain_names;
  /// size() x fields.size(), row-major
  std::vector<std::uint32_t> feature_ids;
  std::vector<std::uint32_t> domains;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return domains.size(); }
  std::size_t num_fields() const noexcept { return fields.size(); }
  std::size_t num_domains() const noexcept { return domain_names.size(); }

  void push_back(std::span<const std::uint32_t> ids, std::uint32_t domain, std::uint8_t label);

  /// Throws ErrorCode::validation if any id, domain or label is out of range.
  void validate() const;

  Batch make_batch(std::span<const std::size_t> rows) const;
  /// All rows, in order.
  Batch as_batch() const;
  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset filter_domain(std::uint32_t domain) const;
  /// Contiguous slice [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;

  std::vector<std::size_t> domain_counts() const;
  std::vector<std::size_t> domain_positives() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Default domain tokens "0", "1", ...
std::vector<std::string> default_domain_names(std::size_t num_domains);

enum class BatchStrategy { domain_homogeneous, mixed };

std::string_view to_string(BatchStrategy s);
BatchStrategy parse_batch_strategy(std::string_view text);

struct BatchPlan {
  std::size_t batch_size = 2000;
  BatchStrategy strategy = BatchStrategy::domain_homogeneous;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BatchSchedule {
  std::vector<std::vector<std::size_t>> batches;
  /// Rows left out because their chunk would have had a single example.
  std::size_t skipped_rows = 0;
};

/// Row-index batches for one epoch; identical (dataset, plan, epoch) give an
/// identical schedule.
///
/// domain_homogeneous: rows of each domain are shuffled and chunked; chunks
/// are then emitted by repeatedly drawing a domain with probability
/// proportional to its remaining rows. mixed: one global shuffle, chunked.
/// A trailing chunk of one row is skipped with a warning on stderr.
BatchSchedule plan_batches(const Dataset& data, const BatchPlan& plan, std::uint64_t epoch);

/// Materialized batches of plan_batches.
std::vector<Batch> batches(const Dataset& data, const BatchPlan& plan, std::uint64_t epoch);

void write_dataset_cache(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset_cache(const std::filesystem::path& path);

}  // namespace starplus
