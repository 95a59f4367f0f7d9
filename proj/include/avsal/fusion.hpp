// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Fuses the three modality feature maps: a shared context from bias-free
// 1×1 projections, one refined map per modality, and a 1×1 readout that is
// upsampled and softmax-normalized into a saliency distribution.

#pragma once

#include <array>

#include "avsal/layers.hpp"
#include "avsal/model_config.hpp"

namespace avsal {

struct FusionWidths {
  int64_t visual = 0;
  int64_t audio = 0;
  int64_t face = 1;
};

class Fusion {
 public:
  Fusion(ParameterStore& store, const ModelConfig& config, const FusionWidths& widths, Rng& rng);

  /// h = Σ_X Θ1_X(f^X), all inputs (T, C_X, g, g) -> (T, 128/d, g, g).
  Var shared_context(const Var& visual, const Var& audio, const Var& face) const;
  /// M^X = ReLU(Θ2_X(concat(h, f^X))) for X = visual, audio, face.
  std::array<Var, 3> modality_maps(const Var& context, const Var& visual, const Var& audio, const Var& face) const;
  /// 1×1 readout of concat(M^V, M^A, M^F): (T, 1, g, g) logits.
  Var readout_logits(const std::array<Var, 3>& maps) const;
  /// Logits upsampled ×8 and softmax-normalized per frame: (T, 1, R, R).
  Var readout(const std::array<Var, 3>& maps) const;

  Var forward(const Var& visual, const Var& audio, const Var& face) const;

 private:
  ModelConfig config_;
  std::array<Conv2d, 3> theta1_, theta2_;
  Conv2d readout_;
};

}  // namespace avsal
