// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Staged optimization: visual pretraining with a throwaway readout, face
// weight pretraining, audio+visual+fusion pretraining with the face path
// off, and joint training of everything.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "avsal/checkpoint.hpp"
#include "avsal/datamodel.hpp"
#include "avsal/model.hpp"

namespace avsal {

enum class Stage { pretrain_visual, pretrain_face, pretrain_audio_joint, joint };

std::string to_string(Stage stage);
/// Throws ConfigError on an unknown name.
Stage parse_stage(std::string_view name);

struct TrainConfig {
  Stage stage = Stage::joint;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t batch_size = 4;
  int64_t max_steps = 2000;
  uint64_t seed = 0;
  int64_t resolution = 256;
  int64_t width_divisor = 1;
  bool use_audio = true;
  bool use_face = true;

  std::string data_dir;  // clip archive
  std::string out_dir;   // checkpoint + loss curve; nothing is written when empty

  // Prerequisites: pretrain_audio_joint needs visual_checkpoint; joint needs
  // face_checkpoint and audio_checkpoint (the pretrain_audio_joint output).
  std::string visual_checkpoint;
  std::string face_checkpoint;
  std::string audio_checkpoint;

  std::string image_asset;  // initializes visual.rgb.* and face.cnn.*
  std::string flow_asset;   // initializes visual.flow.*
  bool require_pretrained = false;

  int64_t lr_decay_every = 0;  // 0: constant learning rate
  double lr_decay_factor = 0.5;
  int64_t plateau_window = 0;  // 0: no early stop on plateau
  double plateau_tolerance = 1e-3;
  double stop_below = 0.0;     // stop once the last-window mean falls below; 0 disables
  int64_t stop_window = 100;
  int64_t min_steps = 0;  // neither early stop fires before this many steps

  /// key = value lines; '#' starts a comment. Unknown keys are errors.
  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::filesystem::path& path);
  std::string to_text() const;
  /// Throws ConfigError on out-of-range values.
  void validate() const;
  ModelConfig model_config() const;
};

/// Σ_pixels KL(G_t || S_t) averaged over frames. `s` is (T, 1, H, W) or
/// (T, H, W); `g` holds T distributions of H×W pixels.
Var kl_loss(const Var& s, const Tensor& g);
/// The densities of a clip stacked as (T, H, W).
Tensor stack_densities(const ClipSample& clip);

/// Per-frame face-weight targets in `face_ids` order plus the frames that
/// carry supervision.
struct FaceTargets {
  Tensor weights;               // (T, N)
  std::vector<bool> supervised; // per frame
};
FaceTargets face_targets(const ClipSample& clip, const std::vector<int>& face_ids);

struct TrainResult {
  std::vector<double> losses;  // one per optimizer step
  int64_t steps = 0;
  int64_t skipped_unsupervised = 0;  // face-stage batches without any target
  std::string stop_reason;
  std::filesystem::path checkpoint;
  std::filesystem::path loss_curve;
};

/// Checks prerequisites, builds and initializes the model, and runs the
/// stage. When `model_out` is given it receives the trained model.
TrainResult train_stage(const TrainConfig& config, std::span<const ClipSample> clips,
                        SaliencyModel* model_out = nullptr);

/// Parameter-name filters of each stage.
bool trains_parameter(Stage stage, const std::string& name);
bool saves_parameter(Stage stage, const std::string& name);

struct Prediction {
  std::vector<SaliencyMap> maps;  // per frame, distribution form
  std::vector<int> face_ids;
  Tensor face_weights;            // (T, N)
  std::vector<bool> has_faces;    // per frame
};

Prediction predict(const SaliencyModel& model, const ClipSample& clip);
Prediction predict(const std::filesystem::path& checkpoint, const ClipSample& clip);

}  // namespace avsal
