// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Visual branch: an appearance (RGB) stream and a motion stream, each at
// stride 8, concatenated along channels and fed through a two-layer
// convolutional LSTM.

#pragma once

#include <vector>

#include "avsal/layers.hpp"
#include "avsal/model_config.hpp"

namespace avsal {

/// Subtracts kRgbMean from every (·, 3, H, W) image.
Tensor mean_normalize(const Tensor& images);

class VisualBranch {
 public:
  VisualBranch(ParameterStore& store, const ModelConfig& config, Rng& rng);

  /// (T,3,R,R) mean-normalized frames -> (T, 512/d, R/8, R/8). Four VGG-16
  /// blocks with max-pooling after blocks 1-3.
  Var rgb(const Var& frames) const;
  /// (T,3,R,R) -> (T, 256/d, R/8, R/8). Step t sees channel-stacked
  /// (frame[t-1], frame[t]); frame[-1] is frame[0].
  Var flow(const Var& frames) const;
  /// (T,3,R,R) -> (T, 256/d, R/8, R/8): second ConvLSTM layer's hidden
  /// sequence. State starts at zero for every call.
  Var forward(const Var& frames) const;

  int64_t rgb_channels() const { return rgb_channels_; }
  int64_t flow_channels() const { return flow_channels_; }
  int64_t out_channels() const { return hidden_; }

 private:
  void check_input(const Var& frames) const;

  ModelConfig config_;
  std::vector<std::vector<Conv2d>> rgb_blocks_;
  std::vector<Conv2d> flow_convs_;
  ConvTranspose2d flow_up_;
  ConvLstmCell lstm1_, lstm2_;
  int64_t rgb_channels_ = 0, flow_channels_ = 0, hidden_ = 0;
};

}  // namespace avsal
