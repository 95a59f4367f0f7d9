// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

namespace avsal {

/// Topology knobs shared by all branches. The canonical network runs at
/// resolution 256 with full channel widths; desk-scale runs shrink the
/// resolution and divide every channel count by `width_divisor` while
/// keeping layer counts, kernels and strides unchanged.
struct ModelConfig {
  int64_t resolution = 256;
  int64_t width_divisor = 1;
  int64_t audio_stack = 16;
  bool use_audio = true;
  bool use_face = true;

  int64_t channels(int64_t canonical) const { return std::max<int64_t>(1, canonical / width_divisor); }
  /// Spatial side of every branch output and of the fusion grid (stride 8).
  int64_t grid() const { return resolution / 8; }
  int64_t face_crop() const { return resolution / 2; }

  /// Identifies parameter shapes; checkpoints refuse to load across
  /// different signatures.
  std::string signature() const {
    return "res=" + std::to_string(resolution) + ";width_div=" + std::to_string(width_divisor) +
           ";audio_stack=" + std::to_string(audio_stack);
  }
};

/// Per-channel RGB mean subtracted from frames and face crops.
inline constexpr double kRgbMean[3] = {0.485, 0.456, 0.406};

}  // namespace avsal
