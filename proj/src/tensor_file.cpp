// SPDX-License-Identifier: Apache-2.0

#include "starplus/tensor_file.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "starplus/error.hpp"

namespace starplus {

namespace {

constexpr const char* kMagic = "STARPLUS-TENSORS";

bool has_whitespace(const std::string& s) {
  return s.empty() || s.find_first_of(" \t\r\n") != std::string::npos;
}

void put_double(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> bytes{};
  for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
  out.write(bytes.data(), 8);
}

double get_double(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), 8);
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorCode::io, fmt::format("{}: malformed tensor file: {}", path.string(), what));
}

}  // namespace

void TensorFile::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = value;
      return;
    }
  }
  meta.emplace_back(key, value);
}

std::optional<std::string> TensorFile::get_meta(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const Matrix* TensorFile::find_tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  if (has_whitespace(file.kind)) throw Error(ErrorCode::validation, "tensor file kind is empty");
  std::ostringstream header;
  header << kMagic << ' ' << kTensorFileVersion << '\n';
  header << "kind " << file.kind << '\n';
  for (const auto& [k, v] : file.meta) {
    if (has_whitespace(k) || v.find('\n') != std::string::npos) {
      throw Error(ErrorCode::validation, fmt::format("invalid manifest entry '{}'", k));
    }
    header << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& [name, m] : file.tensors) {
    if (has_whitespace(name)) {
      throw Error(ErrorCode::validation, fmt::format("invalid tensor name '{}'", name));
    }
    header << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  }
  header << "end\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, fmt::format("cannot open '{}' for writing", path.string()));
  const std::string text = header.str();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, m] : file.tensors) {
    for (double v : m.data()) put_double(out, v);
  }
  if (!out) throw Error(ErrorCode::io, fmt::format("write failed for '{}'", path.string()));
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot open '{}'", path.string()));

  TensorFile file;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> shapes;
  std::string line;
  if (!std::getline(in, line)) corrupt(path, "empty file");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != kMagic) corrupt(path, "missing format tag");
    if (version != kTensorFileVersion) {
      throw Error(ErrorCode::schema, fmt::format("{}: unsupported tensor file version {}",
                                                 path.string(), version));
    }
  }
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    const auto space = line.find(' ');
    const std::string tag = line.substr(0, space);
    const std::string rest = space == std::string::npos ? "" : line.substr(space + 1);
    if (tag == "kind") {
      file.kind = rest;
    } else if (tag == "meta") {
      const auto sp = rest.find(' ');
      if (sp == std::string::npos) {
        file.meta.emplace_back(rest, "");
      } else {
        file.meta.emplace_back(rest.substr(0, sp), rest.substr(sp + 1));
      }
    } else if (tag == "tensor") {
      std::istringstream ls(rest);
      std::string name;
      std::size_t rows = 0;
      std::size_t cols = 0;
      if (!(ls >> name >> rows >> cols)) corrupt(path, "bad tensor line: " + line);
      shapes.push_back({name, {rows, cols}});
    } else {
      corrupt(path, "unknown manifest line: " + line);
    }
  }
  if (!ended) corrupt(path, "manifest has no end marker");

  for (const auto& [name, shape] : shapes) {
    Matrix m(shape.first, shape.second);
    for (double& v : m.data()) v = get_double(in);
    if (!in) corrupt(path, fmt::format("payload truncated in tensor '{}'", name));
    file.tensors.emplace_back(name, std::move(m));
  }
  if (in.peek() != std::char_traits<char>::eof()) corrupt(path, "trailing bytes after payload");
  return file;
}

}  // namespace starplus
