// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "avsal/layers.hpp"
#include "avsal/model_config.hpp"

namespace avsal {

/// Stacks the `depth` windows ending at frame t: (T, H, W) -> (depth, H, W).
/// Indices before the clip start repeat window 0.
Tensor stack_spectrograms(const Tensor& windows, int64_t t, int64_t depth);
/// Every frame's stack at once: (T, H, W) -> (T, 1, depth, H, W).
Tensor stack_all_spectrograms(const Tensor& windows, int64_t depth);

/// Four 3×3×3 convolutions that collapse a stack of spectrogram images to a
/// single stride-8 feature map.
class AudioBranch {
 public:
  AudioBranch(ParameterStore& store, const ModelConfig& config, Rng& rng);

  /// (B, 1, depth, R, R) -> (B, 64/d, R/8, R/8).
  Var forward(const Var& stacks) const;
  int64_t out_channels() const { return out_channels_; }

 private:
  ModelConfig config_;
  std::vector<Conv3d> convs_;
  int64_t out_channels_ = 0;
};

}  // namespace avsal
