// SPDX-License-Identifier: Apache-2.0

#include "starplus/dataset.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "starplus/error.hpp"
#include "starplus/param.hpp"
#include "starplus/strings.hpp"
#include "starplus/tensor_file.hpp"

namespace starplus {

std::vector<std::uint32_t> Batch::field_column(std::size_t field) const {
  std::vector<std::uint32_t> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = feature_ids[i * num_fields + field];
  return out;
}

Matrix Batch::label_matrix() const {
  Matrix m(size(), 1);
  for (std::size_t i = 0; i < size(); ++i) m(i, 0) = labels[i];
  return m;
}

void Dataset::push_back(std::span<const std::uint32_t> ids, std::uint32_t domain,
                        std::uint8_t label) {
  feature_ids.insert(feature_ids.end(), ids.begin(), ids.end());
  domains.push_back(domain);
  labels.push_back(label);
}

void Dataset::validate() const {
  if (feature_ids.size() != size() * num_fields() || labels.size() != size()) {
    throw Error(ErrorCode::validation, "dataset columns have inconsistent lengths");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (domains[i] >= num_domains()) {
      throw Error(ErrorCode::validation, fmt::format("row {}: domain {} out of range for {} "
                                                     "domains",
                                                     i, domains[i], num_domains()));
    }
    if (labels[i] > 1) {
      throw Error(ErrorCode::validation, fmt::format("row {}: label {} is not 0/1", i, labels[i]));
    }
    for (std::size_t f = 0; f < num_fields(); ++f) {
      if (feature_ids[i * num_fields() + f] >= fields[f].vocab_size) {
        throw Error(ErrorCode::validation,
                    fmt::format("row {}: field '{}' id {} out of range for vocab {}", i,
                                fields[f].name, feature_ids[i * num_fields() + f],
                                fields[f].vocab_size));
      }
    }
  }
}

Batch Dataset::make_batch(std::span<const std::size_t> rows) const {
  Batch b;
  b.num_fields = num_fields();
  b.feature_ids.reserve(rows.size() * num_fields());
  b.domains.reserve(rows.size());
  b.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    const auto* ids = feature_ids.data() + r * num_fields();
    b.feature_ids.insert(b.feature_ids.end(), ids, ids + num_fields());
    b.domains.push_back(domains[r]);
    b.labels.push_back(labels[r]);
  }
  return b;
}

Batch Dataset::as_batch() const {
  Batch b;
  b.num_fields = num_fields();
  b.feature_ids = feature_ids;
  b.domains = domains;
  b.labels = labels;
  return b;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.fields = fields;
  out.domain_names = domain_names;
  for (std::size_t r : rows) {
    out.push_back({feature_ids.data() + r * num_fields(), num_fields()}, domains[r], labels[r]);
  }
  return out;
}

Dataset Dataset::filter_domain(std::uint32_t domain) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i) {
    if (domains[i] == domain) rows.push_back(i);
  }
  return subset(rows);
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, size());
  begin = std::min(begin, end);
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  return subset(rows);
}

std::vector<std::size_t> Dataset::domain_counts() const {
  std::vector<std::size_t> out(num_domains(), 0);
  for (std::uint32_t d : domains) ++out[d];
  return out;
}

std::vector<std::size_t> Dataset::domain_positives() const {
  std::vector<std::size_t> out(num_domains(), 0);
  for (std::size_t i = 0; i < size(); ++i) out[domains[i]] += labels[i];
  return out;
}

std::vector<std::string> default_domain_names(std::size_t num_domains) {
  std::vector<std::string> out;
  for (std::size_t d = 0; d < num_domains; ++d) out.push_back(std::to_string(d));
  return out;
}

std::string_view to_string(BatchStrategy s) {
  return s == BatchStrategy::domain_homogeneous ? "domain_homogeneous" : "mixed";
}

BatchStrategy parse_batch_strategy(std::string_view text) {
  if (text == "domain_homogeneous") return BatchStrategy::domain_homogeneous;
  if (text == "mixed") return BatchStrategy::mixed;
  throw Error(ErrorCode::config,
              fmt::format("unknown batch strategy '{}' (expected domain_homogeneous|mixed)", text));
}

void BatchPlan::validate() const {
  if (batch_size < 2) {
    throw Error(ErrorCode::config,
                fmt::format("batch size must be >= 2 for normalization, got {}", batch_size));
  }
}

namespace {

std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& rows,
                                            std::size_t size, std::size_t& skipped) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < rows.size(); start += size) {
    const std::size_t end = std::min(start + size, rows.size());
    if (end - start < 2) {
      skipped += end - start;
      continue;
    }
    out.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(start),
                     rows.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace

BatchSchedule plan_batches(const Dataset& data, const BatchPlan& plan, std::uint64_t epoch) {
  plan.validate();
  if (data.size() == 0) throw Error(ErrorCode::validation, "cannot batch an empty dataset");
  std::seed_seq seq{plan.seed, epoch, std::uint64_t{0xba7c4}};
  Rng rng(seq);
  BatchSchedule schedule;

  if (plan.strategy == BatchStrategy::mixed) {
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    schedule.batches = chunk(rows, plan.batch_size, schedule.skipped_rows);
  } else {
    std::vector<std::vector<std::size_t>> by_domain(data.num_domains());
    for (std::size_t i = 0; i < data.size(); ++i) by_domain[data.domains[i]].push_back(i);
    std::vector<std::vector<std::vector<std::size_t>>> chunks(by_domain.size());
    std::vector<std::size_t> remaining(by_domain.size(), 0);
    std::vector<std::size_t> next(by_domain.size(), 0);
    for (std::size_t d = 0; d < by_domain.size(); ++d) {
      std::shuffle(by_domain[d].begin(), by_domain[d].end(), rng);
      chunks[d] = chunk(by_domain[d], plan.batch_size, schedule.skipped_rows);
      for (const auto& c : chunks[d]) remaining[d] += c.size();
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (true) {
      const std::size_t total = std::accumulate(remaining.begin(), remaining.end(), std::size_t{0});
      if (total == 0) break;
      double pick = unit(rng) * static_cast<double>(total);
      std::size_t chosen = remaining.size();
      for (std::size_t d = 0; d < remaining.size(); ++d) {
        if (remaining[d] == 0) continue;
        chosen = d;
        if (pick < static_cast<double>(remaining[d])) break;
        pick -= static_cast<double>(remaining[d]);
      }
      auto& c = chunks[chosen][next[chosen]++];
      remaining[chosen] -= c.size();
      schedule.batches.push_back(std::move(c));
    }
  }
  if (schedule.skipped_rows > 0) {
    std::clog << fmt::format("warning: skipped {} row(s) that would have formed a batch of one\n",
                             schedule.skipped_rows);
  }
  return schedule;
}

std::vector<Batch> batches(const Dataset& data, const BatchPlan& plan, std::uint64_t epoch) {
  const BatchSchedule schedule = plan_batches(data, plan, epoch);
  std::vector<Batch> out;
  out.reserve(schedule.batches.size());
  for (const auto& rows : schedule.batches) out.push_back(data.make_batch(rows));
  return out;
}

void write_dataset_cache(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  TensorFile file;
  file.kind = "dataset";
  std::vector<std::string> fields;
  for (const DataField& f : data.fields) fields.push_back(fmt::format("{}:{}", f.name, f.vocab_size));
  file.set_meta("fields", fmt::format("{}", fmt::join(fields, ";")));
  file.set_meta("domains", fmt::format("{}", fmt::join(data.domain_names, ";")));
  file.set_meta("examples", std::to_string(data.size()));

  Matrix ids(data.size(), data.num_fields());
  Matrix doms(data.size(), 1);
  Matrix labels(data.size(), 1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t f = 0; f < data.num_fields(); ++f) {
      ids(i, f) = data.feature_ids[i * data.num_fields() + f];
    }
    doms(i, 0) = data.domains[i];
    labels(i, 0) = data.labels[i];
  }
  file.tensors.emplace_back("feature_ids", std::move(ids));
  file.tensors.emplace_back("domains", std::move(doms));
  file.tensors.emplace_back("labels", std::move(labels));
  write_tensor_file(path, file);
}

Dataset read_dataset_cache(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  if (file.kind != "dataset") {
    throw Error(ErrorCode::schema, fmt::format("{}: expected a dataset cache, found kind '{}'",
                                               path.string(), file.kind));
  }
  Dataset data;
  for (const std::string& part : split(file.get_meta("fields").value_or(""), ';')) {
    const auto pieces = split(part, ':');
    if (pieces.size() != 2) throw Error(ErrorCode::schema, "bad field entry in dataset cache");
    data.fields.push_back({pieces[0], parse_size(pieces[1], "vocab_size")});
  }
  data.domain_names = split(file.get_meta("domains").value_or(""), ';');
  const Matrix* ids = file.find_tensor("feature_ids");
  const Matrix* doms = file.find_tensor("domains");
  const Matrix* labels = file.find_tensor("labels");
  if (ids == nullptr || doms == nullptr || labels == nullptr) {
    throw Error(ErrorCode::schema, fmt::format("{}: dataset cache is missing tensors",
                                               path.string()));
  }
  for (std::size_t i = 0; i < doms->rows(); ++i) {
    for (std::size_t f = 0; f < ids->cols(); ++f) {
      data.feature_ids.push_back(static_cast<std::uint32_t>((*ids)(i, f)));
    }
    data.domains.push_back(static_cast<std::uint32_t>((*doms)(i, 0)));
    data.labels.push_back(static_cast<std::uint8_t>((*labels)(i, 0)));
  }
  data.validate();
  return data;
}

}  // namespace starplus
