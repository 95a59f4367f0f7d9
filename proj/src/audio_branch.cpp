// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/audio_branch.hpp"

#include <algorithm>
#include <cstring>

namespace avsal {

Tensor stack_spectrograms(const Tensor& windows, int64_t t, int64_t depth) {
  if (windows.rank() != 3) throw ShapeError("expected (T, H, W) windows, got " + shape_to_string(windows.shape()));
  if (t < 0 || t >= windows.dim(0)) throw ShapeError("frame index out of range");
  const int64_t plane = windows.dim(1) * windows.dim(2);
  Tensor out({depth, windows.dim(1), windows.dim(2)});
  for (int64_t k = 0; k < depth; ++k) {
    const int64_t src = std::max<int64_t>(0, t - depth + 1 + k);
    std::memcpy(out.data() + k * plane, windows.data() + src * plane, sizeof(double) * static_cast<size_t>(plane));
  }
  return out;
}

Tensor stack_all_spectrograms(const Tensor& windows, int64_t depth) {
  if (windows.rank() != 3) throw ShapeError("expected (T, H, W) windows, got " + shape_to_string(windows.shape()));
  const int64_t t_len = windows.dim(0), one = depth * windows.dim(1) * windows.dim(2);
  Tensor out({t_len, 1, depth, windows.dim(1), windows.dim(2)});
  for (int64_t t = 0; t < t_len; ++t) {
    const Tensor s = stack_spectrograms(windows, t, depth);
    std::memcpy(out.data() + t * one, s.data(), sizeof(double) * static_cast<size_t>(one));
  }
  return out;
}

AudioBranch::AudioBranch(ParameterStore& store, const ModelConfig& config, Rng& rng) : config_(config) {
  // Four temporal stride-2 layers collapse any depth up to 16 to one.
  if (config.audio_stack < 1 || config.audio_stack > 16) {
    throw ShapeError("audio stack depth must lie in [1, 16], got " + std::to_string(config.audio_stack));
  }
  const int64_t widths[] = {config.channels(16), config.channels(32), config.channels(64), config.channels(64)};
  const std::array<int, 3> strides[] = {{2, 2, 2}, {2, 2, 2}, {2, 2, 2}, {2, 1, 1}};
  int64_t in = 1;
  for (int i = 0; i < 4; ++i) {
    convs_.emplace_back(store, "audio.conv" + std::to_string(i + 1), in, widths[i], 3, strides[i],
                        std::array<int, 3>{1, 1, 1}, rng);
    in = widths[i];
  }
  out_channels_ = in;
}

Var AudioBranch::forward(const Var& stacks) const {
  const Shape& s = stacks.shape();
  const int64_t r = config_.resolution;
  if (s.size() != 5 || s[1] != 1 || s[2] != config_.audio_stack || s[3] != r || s[4] != r) {
    throw ShapeError("audio branch expects (B, 1, " + std::to_string(config_.audio_stack) + ", " +
                     std::to_string(r) + ", " + std::to_string(r) + "), got " + shape_to_string(s));
  }
  Var x = stacks;
  for (const Conv3d& conv : convs_) x = ops::relu(conv(x));
  // Depth is now 1.
  return ops::reshape(x, {x.dim(0), x.dim(1), x.dim(3), x.dim(4)});
}

}  // namespace avsal
