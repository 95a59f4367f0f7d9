// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/model.hpp"

#include <cstring>

#include "avsal/ingest.hpp"

namespace avsal {
namespace {

// Average-pools an (H, W) map by `k` into dst.
void pool_into(const Tensor& map, int64_t k, double* dst) {
  const int64_t h = map.dim(0), w = map.dim(1), oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int64_t dy = 0; dy < k; ++dy)
        for (int64_t dx = 0; dx < k; ++dx) s += map[(y * k + dy) * w + x * k + dx];
      dst[y * ow + x] = s * inv;
    }
}

}  // namespace

ModelInputs prepare_inputs(const ClipSample& clip, const ModelConfig& config) {
  const int64_t r = config.resolution;
  if (clip.frames.rank() != 4 || clip.frames.dim(1) != 3 || clip.frames.dim(2) != r || clip.frames.dim(3) != r) {
    throw ShapeError("clip frames " + shape_to_string(clip.frames.shape()) + " do not match model resolution " +
                     std::to_string(r));
  }
  const int64_t t_len = clip.frames.dim(0);
  if (clip.audio_windows.shape() != Shape{t_len, r, r}) {
    throw ShapeError("clip audio windows " + shape_to_string(clip.audio_windows.shape()) + " do not match frames");
  }

  ModelInputs in;
  in.frames = mean_normalize(clip.frames);
  in.audio_stacks = stack_all_spectrograms(clip.audio_windows, config.audio_stack);

  FaceCrops crops = crop_faces(clip.frames, clip.face_tracks, config.face_crop());
  const int64_t faces = static_cast<int64_t>(crops.face_ids.size());
  in.face_ids = crops.face_ids;
  in.faces.faces = faces;
  in.faces.length = t_len;
  in.faces.present = crops.present;
  in.faces.crops = faces > 0 ? mean_normalize(crops.crops) : crops.crops;
  // Zero crops stay zero after normalization so absent faces carry no signal.
  for (int64_t n = 0; n < faces; ++n)
    for (int64_t t = 0; t < t_len; ++t) {
      if (crops.present[t * faces + n] != 0.0) continue;
      const int64_t one = 3 * config.face_crop() * config.face_crop();
      std::memset(in.faces.crops.data() + (n * t_len + t) * one, 0, sizeof(double) * static_cast<size_t>(one));
    }

  const int64_t g = config.grid();
  in.faces.kernels = Tensor({t_len, faces, g, g}, 0.0);
  for (int64_t n = 0; n < faces; ++n) {
    const FaceTrack* track = nullptr;
    for (const FaceTrack& ft : clip.face_tracks)
      if (ft.face_id == crops.face_ids[static_cast<size_t>(n)]) track = &ft;
    for (int64_t t = 0; t < t_len; ++t) {
      if (!track->present(static_cast<size_t>(t))) continue;
      const Tensor k = gaussian_kernel(GaussianKernelParams::from_box(*track->boxes[static_cast<size_t>(t)]), r, r);
      pool_into(k, r / g, in.faces.kernels.data() + (t * faces + n) * g * g);
    }
  }
  return in;
}

SaliencyModel::SaliencyModel(const ModelConfig& config, uint64_t seed)
    : config_(config),
      rng_(seed),
      visual_(store_, config, rng_),
      audio_(store_, config, rng_),
      face_(store_, config, rng_),
      fusion_(store_, config, FusionWidths{visual_.out_channels(), audio_.out_channels(), 1}, rng_),
      visual_head_(store_, "pretrain.visual_head", visual_.out_channels(), 1, 1, 1, 0, false, rng_) {}

ModelOutputs SaliencyModel::forward(const ModelInputs& inputs) const {
  return forward(inputs, PathMask{config_.use_audio, config_.use_face});
}

ModelOutputs SaliencyModel::forward(const ModelInputs& inputs, const PathMask& paths) const {
  const int64_t t_len = inputs.length(), g = config_.grid();
  const Var fv = visual_.forward(Var(inputs.frames));
  const Var fa = paths.audio ? audio_.forward(Var(inputs.audio_stacks))
                             : Var(Tensor({t_len, audio_.out_channels(), g, g}, 0.0));
  FaceOutput face;
  if (paths.face) {
    face = face_.forward(inputs.faces);
  } else {
    face = {Var(Tensor({t_len, inputs.faces.faces}, 0.0)), Var(Tensor({t_len, 1, g, g}, 0.0))};
  }
  return {fusion_.forward(fv, fa, face.face_map), face.weights};
}

Var SaliencyModel::visual_pretrain_forward(const ModelInputs& inputs) const {
  const Var fv = visual_.forward(Var(inputs.frames));
  return ops::spatial_softmax(ops::upsample_bilinear(visual_head_(fv), 8));
}

}  // namespace avsal
