// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/visual_branch.hpp"

namespace avsal {

Tensor mean_normalize(const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ShapeError("mean_normalize expects (B, 3, H, W), got " + shape_to_string(images.shape()));
  }
  Tensor out = images;
  const int64_t plane = images.dim(2) * images.dim(3);
  for (int64_t b = 0; b < images.dim(0); ++b)
    for (int64_t c = 0; c < 3; ++c) {
      double* p = out.data() + (b * 3 + c) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] -= kRgbMean[c];
    }
  return out;
}

VisualBranch::VisualBranch(ParameterStore& store, const ModelConfig& config, Rng& rng) : config_(config) {
  if (config.resolution % 16 != 0) {
    throw ShapeError("resolution must be a multiple of 16, got " + std::to_string(config.resolution));
  }
  const std::vector<std::vector<int64_t>> widths = {{64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}};
  int64_t in = 3;
  for (size_t b = 0; b < widths.size(); ++b) {
    std::vector<Conv2d> block;
    for (size_t i = 0; i < widths[b].size(); ++i) {
      const int64_t out = config.channels(widths[b][i]);
      const std::string name = "visual.rgb.conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1);
      block.emplace_back(store, name, in, out, 3, 1, 1, true, rng);
      in = out;
    }
    rgb_blocks_.push_back(std::move(block));
  }
  rgb_channels_ = in;

  // Motion stream: four stride-2 convolutions (stride 16) and one ×2
  // transposed convolution back to stride 8.
  const int64_t c64 = config.channels(64), c128 = config.channels(128), c256 = config.channels(256);
  flow_convs_.emplace_back(store, "visual.flow.conv1", 6, c64, 7, 2, 3, true, rng);
  flow_convs_.emplace_back(store, "visual.flow.conv2", c64, c128, 5, 2, 2, true, rng);
  flow_convs_.emplace_back(store, "visual.flow.conv3", c128, c256, 5, 2, 2, true, rng);
  flow_convs_.emplace_back(store, "visual.flow.conv4", c256, c256, 3, 2, 1, true, rng);
  flow_up_ = ConvTranspose2d(store, "visual.flow.deconv", c256, c256, 4, 2, 1, rng);
  flow_channels_ = c256;

  hidden_ = config.channels(256);
  lstm1_ = ConvLstmCell(store, "visual.convlstm1", rgb_channels_ + flow_channels_, hidden_, 3, rng);
  lstm2_ = ConvLstmCell(store, "visual.convlstm2", hidden_, hidden_, 3, rng);
}

void VisualBranch::check_input(const Var& frames) const {
  const Shape& s = frames.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != config_.resolution || s[3] != config_.resolution) {
    throw ShapeError("visual branch expects (T, 3, " + std::to_string(config_.resolution) + ", " +
                     std::to_string(config_.resolution) + "), got " + shape_to_string(s));
  }
}

Var VisualBranch::rgb(const Var& frames) const {
  check_input(frames);
  Var x = frames;
  for (size_t b = 0; b < rgb_blocks_.size(); ++b) {
    for (const Conv2d& conv : rgb_blocks_[b]) x = ops::relu(conv(x));
    if (b + 1 < rgb_blocks_.size()) x = ops::max_pool2d(x, 2);
  }
  return x;
}

Var VisualBranch::flow(const Var& frames) const {
  check_input(frames);
  const int64_t t_len = frames.dim(0);
  std::vector<int64_t> previous(static_cast<size_t>(t_len));
  for (int64_t t = 0; t < t_len; ++t) previous[static_cast<size_t>(t)] = t == 0 ? 0 : t - 1;
  const Var pair[] = {ops::index_select(frames, previous), frames};
  Var x = ops::concat(pair, 1);
  for (const Conv2d& conv : flow_convs_) x = ops::relu(conv(x));
  return ops::relu(flow_up_(x));
}

Var VisualBranch::forward(const Var& frames) const {
  const Var parts[] = {rgb(frames), flow(frames)};
  const Var features = ops::concat(parts, 1);
  const int64_t t_len = features.dim(0), h = features.dim(2), w = features.dim(3);

  RecurrentState s1 = lstm1_.zero_state(1, h, w), s2 = lstm2_.zero_state(1, h, w);
  std::vector<Var> outputs;
  outputs.reserve(static_cast<size_t>(t_len));
  for (int64_t t = 0; t < t_len; ++t) {
    s1 = lstm1_.step(ops::slice(features, 0, t, t + 1), s1);
    s2 = lstm2_.step(s1.hidden, s2);
    outputs.push_back(s2.hidden);
  }
  return ops::concat(outputs, 0);
}

}  // namespace avsal
