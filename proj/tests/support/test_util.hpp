// SPDX-License-Identifier: Apache-2.0
//
// Small helpers shared by the unit tests.

#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "doctest.h"
#include "starplus/error.hpp"
#include "starplus/matrix.hpp"

namespace starplus::test {

/// Code of the starplus::Error thrown by `f`; fails the test if none is.
inline ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a starplus::Error");
  return ErrorCode::io;
}

inline std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

/// sum(out .* r): a scalar whose gradient w.r.t. `out` is `r`.
inline double weighted_sum(const Matrix& out, const Matrix& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * r.data()[i];
  return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("starplus_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace starplus::test
