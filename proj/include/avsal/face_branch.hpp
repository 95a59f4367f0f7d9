// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Face branch: one parameter-shared CNN+LSTM stream per tracked face, a
// scorer that turns the streams into per-frame softmax weights, and the
// Gaussian composition of those weights into a single face map.

#pragma once

#include <span>
#include <vector>

#include "avsal/datamodel.hpp"
#include "avsal/layers.hpp"
#include "avsal/model_config.hpp"

namespace avsal {

/// Axis-aligned 2-D Gaussian with unit peak.
struct GaussianKernelParams {
  Point mu;
  double sigma_x = 1.0;
  double sigma_y = 1.0;

  /// Centered on the box, σ = half the box side along each axis.
  static GaussianKernelParams from_box(const Box& box);
  double operator()(double x, double y) const;
};

/// Kernel sampled at pixel centers (x = col + 0.5, y = row + 0.5): (h, w).
Tensor gaussian_kernel(const GaussianKernelParams& g, int64_t h, int64_t w);
/// Σ_n weights[n] · kernel_n, shape (h, w).
Tensor compose_face_map(std::span<const double> weights, std::span<const GaussianKernelParams> kernels, int64_t h,
                        int64_t w);

/// Model-ready face inputs of one clip with N tracks over T frames.
struct FaceBatch {
  int64_t faces = 0;
  int64_t length = 0;
  Tensor crops;    // (N·T, 3, S, S) mean-normalized, row n·T + t; zeros where absent
  Tensor present;  // (T, N) of 0/1
  Tensor kernels;  // (T, N, g, g) unit-peak Gaussians average-pooled to the fusion grid
};

struct FaceOutput {
  Var weights;   // (T, N); rows with no face are zero
  Var face_map;  // (T, 1, g, g)
};

class FaceBranch {
 public:
  FaceBranch(ParameterStore& store, const ModelConfig& config, Rng& rng);

  /// 13-conv VGG-16 trunk with global average pooling: (B, 3, S, S) -> (B, 512/d).
  Var cnn(const Var& crops) const;
  /// Runs all N streams in lockstep. Returns hidden vectors (T·N, H), row
  /// t·N + n. A stream's state is reset wherever its face is absent, so a
  /// face that reappears starts fresh; absent rows are zero.
  Var streams(const Var& crops, int64_t faces, const Tensor& present) const;
  /// One face over T frames: (T, 3, S, S) -> (T, H).
  Var stream(const Var& crops) const;
  /// Scores every present face against the mean of the present faces and
  /// softmax-normalizes per frame: hidden (T·N, H) -> (T, N).
  Var fusion_weights(const Var& hidden, const Tensor& present) const;

  FaceOutput forward(const FaceBatch& batch) const;
  int64_t hidden_size() const { return lstm1_.hidden_size(); }

 private:
  ModelConfig config_;
  std::vector<std::vector<Conv2d>> blocks_;
  LstmCell lstm1_, lstm2_;
  Linear score1_, score2_;
};

struct FaceWeightLoss {
  Var loss;
  bool unsupervised = false;  // no (frame, face) pair carried a target
};

/// Mean squared error between predicted and target weights over present
/// faces of supervised frames. pred/target/present are (T, N).
FaceWeightLoss face_weight_loss(const Var& pred, const Tensor& target, const std::vector<bool>& supervised,
                                const Tensor& present);

}  // namespace avsal
