/*
 * Copyright 2026 The nerfmae Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef NERFMAE_ERRORS_HPP_
#define NERFMAE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace nerfmae {

/// Shapes of two operands are incompatible.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (e.g. non-scalar loss).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Invalid configuration value (indivisible extents, bad factor, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a function.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Malformed file contents (bad magic, truncated payload, ...).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dataset-level inconsistency (empty set, count mismatch, ...).
struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A function expected to be deterministic returned different values.
struct DeterminismError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Manifest parsing failure.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Command-line usage failure.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nerfmae

#endif  // NERFMAE_ERRORS_HPP_
