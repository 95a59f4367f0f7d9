// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

namespace avsal {

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a documented invariant (CLI exit code 3).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raw asset could not be read or decoded (CLI exit code 3).
class IngestError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace avsal
