// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Binary tensor files: "AVST" magic, uint32 version (1), uint32 rank,
// int64 dims, then float32 values in row-major order. Little-endian.

#pragma once

#include <filesystem>

#include "avsal/tensor.hpp"

namespace avsal {

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor);
/// Throws ValidationError on a malformed or truncated file.
Tensor read_tensor_file(const std::filesystem::path& path);

}  // namespace avsal
