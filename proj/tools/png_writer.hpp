// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "avsal/tensor.hpp"

namespace avsal::cli {

/// 8-bit grayscale PNG of an (H, W) map scaled so its maximum is white.
void write_map_png(const std::filesystem::path& path, const Tensor& map);

}  // namespace avsal::cli
