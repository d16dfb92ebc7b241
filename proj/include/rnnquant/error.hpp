// Copyright 2026 The rnnquant Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RNNQUANT_ERROR_HPP
#define RNNQUANT_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rnnquant {

/// Broad failure classes. The CLI maps each to an exit code and prints the
/// category name as the first token of its one-line error message.
enum class ErrorCategory {
  argument,
  shape,
  degenerate,
  numeric,
  config,
  data,
  io,
  corruption,
  version,
  integrity,
};

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::argument: return "argument";
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::degenerate: return "degenerate";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::io: return "io";
    case ErrorCategory::corruption: return "corruption";
    case ErrorCategory::version: return "version";
    case ErrorCategory::integrity: return "integrity";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error(ErrorCategory::argument, w) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorCategory::shape, w) {}
};

/// Raised when a weight group has no nonzero entry, so no step size exists.
struct DegenerateWeights : Error {
  explicit DegenerateWeights(const std::string& w) : Error(ErrorCategory::degenerate, w) {}
};

struct NumericFault : Error {
  explicit NumericFault(const std::string& w) : Error(ErrorCategory::numeric, w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCategory::config, w) {}
};

struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorCategory::data, w) {}
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCategory::io, w) {}
};

struct CorruptionError : Error {
  explicit CorruptionError(const std::string& w) : Error(ErrorCategory::corruption, w) {}
};

struct VersionError : Error {
  explicit VersionError(const std::string& w) : Error(ErrorCategory::version, w) {}
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string& w) : Error(ErrorCategory::integrity, w) {}
};

/// Process exit code for a category: 2 config, 3 data, 4 numeric, 5 I/O.
inline int exit_code_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::argument:
    case ErrorCategory::config:
      return 2;
    case ErrorCategory::data:
    case ErrorCategory::shape:
      return 3;
    case ErrorCategory::numeric:
    case ErrorCategory::degenerate:
    case ErrorCategory::integrity:
      return 4;
    case ErrorCategory::io:
    case ErrorCategory::corruption:
    case ErrorCategory::version:
      return 5;
  }
  return 1;
}

}  // namespace rnnquant

#endif  // RNNQUANT_ERROR_HPP
