// SPDX-License-Identifier: Apache-2.0

#include "starplus/model_config.hpp"

#include <charconv>
#include <map>

#include <fmt/format.h>

#include "starplus/error.hpp"
#include "starplus/strings.hpp"

namespace starplus {

std::string_view to_string(Architecture a) {
  return a == Architecture::star ? "star" : "star_plus";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "star") return Architecture::star;
  if (text == "star_plus" || text == "star+") return Architecture::star_plus;
  throw Error(ErrorCode::config,
              fmt::format("unknown architecture '{}' (expected star|star_plus)", text));
}

std::string join_sizes(const std::vector<std::size_t>& v) { return fmt::format("{}", fmt::join(v, ",")); }

std::vector<std::size_t> parse_sizes(std::string_view text) {
  std::vector<std::size_t> out;
  for (const std::string& part : split(text, ',')) {
    const std::string t = trim(part);
    if (t.empty()) continue;
    out.push_back(parse_size(t, "size list"));
  }
  return out;
}

void ModelConfig::validate() const {
  if (num_domains < 2) {
    throw Error(ErrorCode::config, fmt::format("num_domains must be >= 2, got {}", num_domains));
  }
  if (fields.empty()) throw Error(ErrorCode::config, "model needs at least one feature field");
  for (const FieldSpec& f : fields) {
    if (f.name.empty() || f.name.find_first_of(":; \t,=") != std::string::npos) {
      throw Error(ErrorCode::config, fmt::format("invalid field name '{}'", f.name));
    }
    if (f.vocab_size == 0 || f.embedding_dim == 0) {
      throw Error(ErrorCode::config,
                  fmt::format("field '{}' needs vocab_size >= 1 and embedding_dim >= 1", f.name));
    }
  }
  for (std::size_t w : tower_widths) {
    if (w == 0) throw Error(ErrorCode::config, "tower widths must be >= 1");
  }
  if (tower_output_dim == 0) throw Error(ErrorCode::config, "tower_output_dim must be >= 1");
  if (domain_embedding_dim == 0) {
    throw Error(ErrorCode::config, "domain_embedding_dim must be >= 1");
  }
  if (!(norm_momentum >= 0.0 && norm_momentum < 1.0)) {
    throw Error(ErrorCode::config, fmt::format("norm momentum {} outside [0, 1)", norm_momentum));
  }
  if (!(norm_eps > 0.0)) throw Error(ErrorCode::config, "norm eps must be > 0");
  fusion.validate();
  if (architecture == Architecture::star && fusion.type != FusionType::builtin) {
    throw Error(ErrorCode::config,
                fmt::format("the star architecture uses its builtin combination; fusion '{}' is "
                            "only valid for star_plus",
                            to_string(fusion.type)));
  }
  if (architecture == Architecture::star_plus && fusion.type == FusionType::builtin) {
    throw Error(ErrorCode::config,
                "star_plus needs a fusion strategy (add|adaptive_add|gate|concat)");
  }
}

std::size_t ModelConfig::input_dim() const {
  std::size_t d = 0;
  for (const FieldSpec& f : fields) d += f.embedding_dim;
  return d;
}

std::size_t ModelConfig::tower_dim() const {
  return architecture == Architecture::star ? 1 : tower_output_dim;
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_manifest() const {
  std::vector<std::string> field_parts;
  for (const FieldSpec& f : fields) {
    field_parts.push_back(fmt::format("{}:{}:{}", f.name, f.vocab_size, f.embedding_dim));
  }
  return {
      {"architecture", std::string(to_string(architecture))},
      {"num_domains", std::to_string(num_domains)},
      {"fields", fmt::format("{}", fmt::join(field_parts, ";"))},
      {"tower_widths", join_sizes(tower_widths)},
      {"tower_output_dim", std::to_string(tower_output_dim)},
      {"domain_embedding_dim", std::to_string(domain_embedding_dim)},
      {"norm", std::string(to_string(norm))},
      {"norm_momentum", fmt::format("{}", norm_momentum)},
      {"norm_eps", fmt::format("{}", norm_eps)},
      {"partition_moments", std::string(to_string(partition_moments))},
      {"fusion", std::string(to_string(fusion.type))},
      {"add_constants", fmt::format("{},{},{}", fusion.c_d, fusion.c_s, fusion.c_a)},
      {"gate_hidden", std::to_string(fusion.gate_hidden)},
      {"concat_head_widths", join_sizes(fusion.concat_head_widths)},
      {"seed", std::to_string(seed)},
  };
}

ModelConfig ModelConfig::from_manifest(
    const std::vector<std::pair<std::string, std::string>>& meta) {
  std::map<std::string, std::string> kv(meta.begin(), meta.end());
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw Error(ErrorCode::schema, fmt::format("model manifest is missing '{}'", key));
    }
    return it->second;
  };

  ModelConfig cfg;
  cfg.architecture = parse_architecture(get("architecture"));
  cfg.num_domains = parse_size(get("num_domains"), "num_domains");
  cfg.fields.clear();
  for (const std::string& part : split(get("fields"), ';')) {
    const auto pieces = split(part, ':');
    if (pieces.size() != 3) {
      throw Error(ErrorCode::schema, fmt::format("bad field entry '{}' in manifest", part));
    }
    cfg.fields.push_back(
        {pieces[0], parse_size(pieces[1], "vocab_size"), parse_size(pieces[2], "embedding_dim")});
  }
  cfg.tower_widths = parse_sizes(get("tower_widths"));
  cfg.tower_output_dim = parse_size(get("tower_output_dim"), "tower_output_dim");
  cfg.domain_embedding_dim = parse_size(get("domain_embedding_dim"), "domain_embedding_dim");
  cfg.norm = parse_norm_kind(get("norm"));
  cfg.norm_momentum = parse_double(get("norm_momentum"), "norm_momentum");
  cfg.norm_eps = parse_double(get("norm_eps"), "norm_eps");
  cfg.partition_moments = parse_partition_moments(get("partition_moments"));
  cfg.fusion.type = parse_fusion_type(get("fusion"));
  const auto constants = split(get("add_constants"), ',');
  if (constants.size() != 3) throw Error(ErrorCode::schema, "add_constants needs three values");
  cfg.fusion.c_d = parse_double(constants[0], "c_d");
  cfg.fusion.c_s = parse_double(constants[1], "c_s");
  cfg.fusion.c_a = parse_double(constants[2], "c_a");
  cfg.fusion.gate_hidden = parse_size(get("gate_hidden"), "gate_hidden");
  cfg.fusion.concat_head_widths = parse_sizes(get("concat_head_widths"));
  cfg.seed = parse_u64(get("seed"), "seed");
  return cfg;
}

std::vector<std::string> ModelConfig::diff(const ModelConfig& found) const {
  const auto mine = to_manifest();
  const auto theirs = found.to_manifest();
  std::vector<std::string> out;
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].first == "seed") continue;
    if (mine[i].second != theirs[i].second) {
      out.push_back(fmt::format("{}: expected '{}', found '{}'", mine[i].first, mine[i].second,
                                theirs[i].second));
    }
  }
  return out;
}

}  // namespace starplus
