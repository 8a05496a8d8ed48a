// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace urm {

/// Element precision of a tensor buffer. Training defaults to f32;
/// gradient checking requires f64.
enum class Precision : std::uint8_t { f32 = 0, f64 = 1 };

inline const char* precision_name(Precision p) {
  return p == Precision::f32 ? "single" : "double";
}

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dimension / precision mismatch between operands.
struct ShapeError : Error {
  using Error::Error;
};

/// A declared operation precondition was violated.
struct ContractError : Error {
  using Error::Error;
};

/// Malformed persisted data. Carries the byte offset at which parsing failed.
struct ParseError : Error {
  std::size_t offset;
  ParseError(const std::string& msg, std::size_t byte_offset)
      : Error(msg + " (at byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
};

/// Invalid configuration (bad key, unparseable value, inconsistent dims).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace urm
