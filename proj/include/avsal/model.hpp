// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// The full saliency network: visual, audio and face branches joined by the
// fusion module.

#pragma once

#include <cstdint>

#include "avsal/audio_branch.hpp"
#include "avsal/datamodel.hpp"
#include "avsal/face_branch.hpp"
#include "avsal/fusion.hpp"
#include "avsal/visual_branch.hpp"

namespace avsal {

/// Network-ready tensors of one clip.
struct ModelInputs {
  Tensor frames;        // (T, 3, R, R) mean-normalized
  Tensor audio_stacks;  // (T, 1, 16, R, R)
  FaceBatch faces;
  std::vector<int> face_ids;  // order of the face axis

  int64_t length() const { return frames.dim(0); }
};

/// Normalizes frames, stacks audio windows, crops faces (ordered by
/// face_id) and pools their Gaussian kernels to the fusion grid.
ModelInputs prepare_inputs(const ClipSample& clip, const ModelConfig& config);

struct ModelOutputs {
  Var saliency;      // (T, 1, R, R), each frame sums to 1
  Var face_weights;  // (T, N)
};

/// Which modality paths feed the fusion. A disabled path contributes a zero
/// feature map.
struct PathMask {
  bool audio = true;
  bool face = true;
};

class SaliencyModel {
 public:
  /// Parameters are drawn from a generator seeded with `seed`, in a fixed
  /// order, so equal seeds give bitwise-equal models.
  explicit SaliencyModel(const ModelConfig& config, uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  const VisualBranch& visual() const { return visual_; }
  const AudioBranch& audio() const { return audio_; }
  const FaceBranch& face() const { return face_; }
  const Fusion& fusion() const { return fusion_; }

  /// Paths follow config().use_audio / use_face.
  ModelOutputs forward(const ModelInputs& inputs) const;
  ModelOutputs forward(const ModelInputs& inputs, const PathMask& paths) const;

  /// Visual branch through the throwaway pretraining readout: (T, 1, R, R).
  Var visual_pretrain_forward(const ModelInputs& inputs) const;

  /// Prefix of the pretraining-only head parameters.
  static constexpr const char* kPretrainHeadPrefix = "pretrain.";

 private:
  ModelConfig config_;
  ParameterStore store_;
  Rng rng_;
  VisualBranch visual_;
  AudioBranch audio_;
  FaceBranch face_;
  Fusion fusion_;
  Conv2d visual_head_;
};

}  // namespace avsal
