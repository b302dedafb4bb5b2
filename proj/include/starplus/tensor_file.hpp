// SPDX-License-Identifier: Apache-2.0
//
// Single-file container used for checkpoints and dataset caches: a text
// manifest (format tag, version, metadata lines, tensor names and shapes)
// terminated by an "end" line, followed by every tensor's entries as
// little-endian IEEE-754 doubles in manifest order.
//
//   STARPLUS-TENSORS 1
//   kind checkpoint
//   meta architecture star_plus
//   tensor embedding/f0 100 8
//   end
//   <binary payload>

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "starplus/matrix.hpp"

namespace starplus {

inline constexpr int kTensorFileVersion = 1;

struct TensorFile {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> get_meta(const std::string& key) const;
  const Matrix* find_tensor(const std::string& name) const;
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

}  // namespace starplus
