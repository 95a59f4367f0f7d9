// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/fusion.hpp"

namespace avsal {

Fusion::Fusion(ParameterStore& store, const ModelConfig& config, const FusionWidths& widths, Rng& rng)
    : config_(config) {
  const char* names[] = {"visual", "audio", "face"};
  const int64_t in[] = {widths.visual, widths.audio, widths.face};
  const int64_t ctx = config.channels(128), mod = config.channels(64);
  for (int i = 0; i < 3; ++i) {
    theta1_[static_cast<size_t>(i)] =
        Conv2d(store, std::string("fusion.theta1_") + names[i], in[i], ctx, 1, 1, 0, false, rng);
  }
  for (int i = 0; i < 3; ++i) {
    theta2_[static_cast<size_t>(i)] =
        Conv2d(store, std::string("fusion.theta2_") + names[i], ctx + in[i], mod, 3, 1, 1, true, rng);
  }
  // No bias: the spatial softmax cancels a constant shift of the logits.
  readout_ = Conv2d(store, "fusion.readout", 3 * mod, 1, 1, 1, 0, false, rng);
}

Var Fusion::shared_context(const Var& visual, const Var& audio, const Var& face) const {
  if (visual.shape()[0] != audio.shape()[0] || visual.shape()[0] != face.shape()[0] ||
      visual.dim(2) != config_.grid() || audio.dim(2) != config_.grid() || face.dim(2) != config_.grid()) {
    throw ShapeError("fusion inputs disagree: " + shape_to_string(visual.shape()) + ", " +
                     shape_to_string(audio.shape()) + ", " + shape_to_string(face.shape()));
  }
  return ops::add(ops::add(theta1_[0](visual), theta1_[1](audio)), theta1_[2](face));
}

std::array<Var, 3> Fusion::modality_maps(const Var& context, const Var& visual, const Var& audio,
                                         const Var& face) const {
  const Var* features[] = {&visual, &audio, &face};
  std::array<Var, 3> out;
  for (size_t i = 0; i < 3; ++i) {
    const Var parts[] = {context, *features[i]};
    out[i] = ops::relu(theta2_[i](ops::concat(parts, 1)));
  }
  return out;
}

Var Fusion::readout_logits(const std::array<Var, 3>& maps) const {
  return readout_(ops::concat(std::span<const Var>(maps.data(), maps.size()), 1));
}

Var Fusion::readout(const std::array<Var, 3>& maps) const {
  return ops::spatial_softmax(ops::upsample_bilinear(readout_logits(maps), 8));
}

Var Fusion::forward(const Var& visual, const Var& audio, const Var& face) const {
  return readout(modality_maps(shared_context(visual, audio, face), visual, audio, face));
}

}  // namespace avsal
