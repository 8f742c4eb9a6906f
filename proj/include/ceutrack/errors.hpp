// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 ceutrack contributors

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ceutrack {

/// Malformed input data. Carries the byte offset (binary/CSV streams) or the
/// 1-based line number (line-oriented files) where parsing stopped; -1 when
/// not applicable.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, long long byte_offset = -1, long long line = -1)
      : std::runtime_error(format(what, byte_offset, line)),
        byte_offset_(byte_offset),
        line_(line) {}

  long long byte_offset() const { return byte_offset_; }
  long long line() const { return line_; }

private:
  static std::string format(const std::string& what, long long off, long long line) {
    std::string s = what;
    if (off >= 0) s += " (byte offset " + std::to_string(off) + ")";
    if (line >= 0) s += " (line " + std::to_string(line) + ")";
    return s;
  }

  long long byte_offset_;
  long long line_;
};

/// Well-formed input that violates a declared constraint (out-of-range
/// coordinates, dimension mismatches, bad tags).
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ceutrack
