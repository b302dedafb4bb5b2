// SPDX-License-Identifier: Apache-2.0

#include "starplus/csv_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "starplus/error.hpp"
#include "starplus/strings.hpp"

namespace starplus {

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void CsvSchema::validate() const {
  std::size_t domain_cols = 0;
  std::size_t label_cols = 0;
  std::size_t feature_cols = 0;
  for (const CsvColumn& c : columns) {
    switch (c.role) {
      case ColumnRole::domain:
        ++domain_cols;
        if (c.domain_values.empty()) {
          throw Error(ErrorCode::schema, fmt::format("domain column '{}' lists no values", c.name));
        }
        break;
      case ColumnRole::label: ++label_cols; break;
      case ColumnRole::feature:
        ++feature_cols;
        if (c.vocab_size == 0) {
          throw Error(ErrorCode::schema, fmt::format("feature column '{}' needs vocab >= 1", c.name));
        }
        break;
      case ColumnRole::ignore: break;
    }
  }
  if (domain_cols != 1 || label_cols != 1 || feature_cols == 0) {
    throw Error(ErrorCode::schema,
                fmt::format("schema needs exactly one domain column, one label column and at "
                            "least one feature (found {}, {}, {})",
                            domain_cols, label_cols, feature_cols));
  }
}

std::vector<DataField> CsvSchema::data_fields() const {
  std::vector<DataField> out;
  for (const CsvColumn& c : columns) {
    if (c.role == ColumnRole::feature) out.push_back({c.name, c.vocab_size + 1});
  }
  return out;
}

CsvSchema read_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot open schema '{}'", path.string()));
  CsvSchema schema;
  std::string raw;
  std::size_t line_no = 0;
  bool versioned = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::schema,
                  fmt::format("{}:{}: {}", path.string(), line_no, why));
    };
    if (tok[0] == "schema_version") {
      if (tok.size() != 2 || tok[1] != "1") fail("unsupported schema_version");
      versioned = true;
      continue;
    }
    if (tok[0] != "column" || tok.size() < 3) fail("expected 'column <name> <role> ...'");
    CsvColumn col;
    col.name = tok[1];
    const std::string& role = tok[2];
    if (role == "feature") {
      if (tok.size() != 5) fail("feature columns need '<id|hash> <vocab>'");
      if (tok[3] == "id") {
        col.encoding = FeatureEncoding::id;
      } else if (tok[3] == "hash") {
        col.encoding = FeatureEncoding::hash;
      } else {
        fail("feature encoding must be id or hash");
      }
      col.role = ColumnRole::feature;
      col.vocab_size = parse_size(tok[4], "vocab");
    } else if (role == "domain") {
      if (tok.size() != 4) fail("domain columns need a comma-separated value list");
      col.role = ColumnRole::domain;
      col.domain_values = split(tok[3], ',');
    } else if (role == "label") {
      col.role = ColumnRole::label;
    } else if (role == "ignore") {
      col.role = ColumnRole::ignore;
    } else {
      fail(fmt::format("unknown role '{}'", role));
    }
    schema.columns.push_back(std::move(col));
  }
  if (!versioned) {
    throw Error(ErrorCode::schema, fmt::format("{}: missing 'schema_version 1'", path.string()));
  }
  schema.validate();
  return schema;
}

void write_schema(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, fmt::format("cannot write schema '{}'", path.string()));
  out << "# starplus csv schema\nschema_version 1\n";
  for (const CsvColumn& c : schema.columns) {
    out << "column " << c.name << ' ';
    switch (c.role) {
      case ColumnRole::feature:
        out << "feature " << (c.encoding == FeatureEncoding::id ? "id" : "hash") << ' '
            << c.vocab_size;
        break;
      case ColumnRole::domain: out << "domain " << fmt::format("{}", fmt::join(c.domain_values, ",")); break;
      case ColumnRole::label: out << "label"; break;
      case ColumnRole::ignore: out << "ignore"; break;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::io, fmt::format("write failed for '{}'", path.string()));
}

namespace {

std::uint32_t encode_feature(const CsvColumn& col, const std::string& token) {
  const auto oov = static_cast<std::uint32_t>(col.vocab_size);
  if (col.encoding == FeatureEncoding::hash) {
    if (token.empty()) return oov;
    return static_cast<std::uint32_t>(fnv1a64(token) % col.vocab_size);
  }
  std::uint64_t v = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (token.empty() || ec != std::errc() || ptr != end || v >= col.vocab_size) return oov;
  return static_cast<std::uint32_t>(v);
}

}  // namespace

IngestResult ingest_csv(const std::filesystem::path& csv, const CsvSchema& schema,
                        const IngestOptions& options) {
  schema.validate();
  std::ifstream in(csv);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot open csv '{}'", csv.string()));

  IngestResult result;
  Dataset& data = result.dataset;
  data.fields = schema.data_fields();
  const CsvColumn* domain_col = nullptr;
  for (const CsvColumn& c : schema.columns) {
    if (c.role == ColumnRole::domain) domain_col = &c;
  }
  data.domain_names = domain_col->domain_values;

  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::schema, fmt::format("{}: missing header line", csv.string()));
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    const auto header = split(line, ',');
    std::vector<std::string> expected;
    for (const CsvColumn& c : schema.columns) expected.push_back(c.name);
    std::vector<std::string> found;
    for (const auto& h : header) found.push_back(trim(h));
    if (found != expected) {
      throw Error(ErrorCode::schema,
                  fmt::format("{}: header [{}] does not match schema columns [{}]", csv.string(),
                              fmt::join(found, ","), fmt::join(expected, ",")));
    }
  }

  std::vector<std::uint32_t> ids(data.num_fields());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++result.total_rows;
    std::string problem;
    const auto cells = split(line, ',');
    std::uint32_t domain = 0;
    std::uint8_t label = 0;
    if (cells.size() != schema.columns.size()) {
      problem = fmt::format("expected {} columns, found {}", schema.columns.size(), cells.size());
    } else {
      std::size_t f = 0;
      for (std::size_t c = 0; c < cells.size() && problem.empty(); ++c) {
        const CsvColumn& col = schema.columns[c];
        const std::string token = trim(cells[c]);
        switch (col.role) {
          case ColumnRole::feature: ids[f++] = encode_feature(col, token); break;
          case ColumnRole::domain: {
            const auto it = std::find(col.domain_values.begin(), col.domain_values.end(), token);
            if (it == col.domain_values.end()) {
              problem = fmt::format("unknown domain value '{}' in column '{}' (allowed: {})",
                                    token, col.name, fmt::join(col.domain_values, ", "));
            } else {
              domain = static_cast<std::uint32_t>(it - col.domain_values.begin());
            }
            break;
          }
          case ColumnRole::label:
            if (token == "0" || token == "1") {
              label = token == "1" ? 1 : 0;
            } else {
              problem = fmt::format("bad label token '{}' in column '{}' (expected 0 or 1)",
                                    token, col.name);
            }
            break;
          case ColumnRole::ignore: break;
        }
      }
    }
    if (!problem.empty()) {
      if (options.strict) {
        throw Error(ErrorCode::validation,
                    fmt::format("{}: line {}: {}", csv.string(), line_no, problem));
      }
      ++result.rejected;
      result.errors.push_back({line_no, problem});
      continue;
    }
    data.push_back(ids, domain, label);
    ++result.parsed;
  }
  return result;
}

CsvSchema schema_for(const Dataset& data) {
  CsvSchema schema;
  for (const DataField& f : data.fields) {
    CsvColumn c;
    c.name = f.name;
    c.role = ColumnRole::feature;
    c.encoding = FeatureEncoding::id;
    // Ingestion appends an OOV id at index vocab, so declaring one fewer
    // in-vocabulary value maps the top id onto itself. A single-valued field
    // cannot shrink and gains an (unused) extra id.
    c.vocab_size = f.vocab_size > 1 ? f.vocab_size - 1 : 1;
    schema.columns.push_back(std::move(c));
  }
  CsvColumn domain;
  domain.name = "domain";
  domain.role = ColumnRole::domain;
  domain.domain_values = data.domain_names;
  schema.columns.push_back(std::move(domain));
  CsvColumn label;
  label.name = "label";
  label.role = ColumnRole::label;
  schema.columns.push_back(std::move(label));
  return schema;
}

void write_csv(const std::filesystem::path& csv, const Dataset& data) {
  std::ofstream out(csv, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, fmt::format("cannot write csv '{}'", csv.string()));
  std::string buf;
  for (const DataField& f : data.fields) buf += f.name + ",";
  buf += "domain,label\n";
  out << buf;
  for (std::size_t i = 0; i < data.size(); ++i) {
    buf.clear();
    for (std::size_t f = 0; f < data.num_fields(); ++f) {
      buf += std::to_string(data.feature_ids[i * data.num_fields() + f]);
      buf += ',';
    }
    buf += data.domain_names[data.domains[i]];
    buf += ',';
    buf += data.labels[i] ? '1' : '0';
    buf += '\n';
    out << buf;
  }
  if (!out) throw Error(ErrorCode::io, fmt::format("write failed for '{}'", csv.string()));
}

}  // namespace starplus
