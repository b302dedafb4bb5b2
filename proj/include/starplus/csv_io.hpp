// SPDX-License-Identifier: Apache-2.0
//
// Tabular CSV ingestion driven by a schema file, and CSV export.
//
// Schema file, one directive per line ('#' starts a comment):
//
//   schema_version 1
//   column <name> feature id <vocab>       integer ids in [0, vocab); anything
//                                          else lands in the OOV bucket <vocab>
//   column <name> feature hash <vocab>     fnv1a(token) % vocab; empty token is OOV
//   column <name> domain <v0>,<v1>,...     allowed domain tokens, in id order
//   column <name> label                    tokens "0" or "1"
//   column <name> ignore
//
// Columns appear in CSV order. Every feature field gets vocab + 1 ids; the
// last one is the out-of-vocabulary bucket. The CSV's first line must be a
// header naming exactly the schema's columns. Values must not contain commas.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "starplus/dataset.hpp"

namespace starplus {

enum class ColumnRole { feature, domain, label, ignore };
enum class FeatureEncoding { id, hash };

struct CsvColumn {
  std::string name;
  ColumnRole role = ColumnRole::ignore;
  FeatureEncoding encoding = FeatureEncoding::id;
  /// In-vocabulary size (feature columns).
  std::size_t vocab_size = 0;
  /// Allowed tokens (domain column).
  std::vector<std::string> domain_values;
};

struct CsvSchema {
  std::vector<CsvColumn> columns;

  /// Exactly one domain and one label column, at least one feature.
  void validate() const;
  std::vector<DataField> data_fields() const;
};

CsvSchema read_schema(const std::filesystem::path& path);
void write_schema(const std::filesystem::path& path, const CsvSchema& schema);

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct IngestOptions {
  /// Strict mode throws on the first bad row; otherwise bad rows are counted
  /// as rejected and listed.
  bool strict = true;
};

struct IngestResult {
  Dataset dataset;
  std::size_t total_rows = 0;
  std::size_t parsed = 0;
  std::size_t rejected = 0;
  std::vector<RowError> errors;
};

IngestResult ingest_csv(const std::filesystem::path& csv, const CsvSchema& schema,
                        const IngestOptions& options = {});

/// Schema that re-ingests `data` losslessly: id encoding, domain tokens =
/// domain names, and in-vocabulary size = field cardinality - 1 so that the
/// highest id doubles as the OOV bucket and every field keeps its cardinality.
CsvSchema schema_for(const Dataset& data);

/// Writes header + one line per example in schema_for(data) column order.
void write_csv(const std::filesystem::path& csv, const Dataset& data);

std::uint64_t fnv1a64(std::string_view text) noexcept;

}  // namespace starplus
