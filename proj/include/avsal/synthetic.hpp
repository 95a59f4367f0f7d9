// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Procedural clips for tests and demos: two drifting faces, one of which
// talks (a flickering mouth bar and a pure tone), a moving bright blob, and
// scripted observers whose gaze follows the talker with known delays.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "avsal/datamodel.hpp"

namespace avsal {

struct SyntheticOptions {
  int64_t resolution = 64;
  int64_t length = 12;
  int64_t subjects = 8;
  int64_t turn_frame = 6;        // talker switches from the first to the second face
  int64_t transition_delay = 3;  // frames until half the observers reach the new talker
  double frame_rate = 25.0;
  uint64_t seed = 0;
  /// Every frame splits observers 1:3 between face 0 and face 1 instead of
  /// following the talker.
  bool fixed_weights = false;
};

/// Clip `index` of a synthetic set. Deterministic in (options, index).
ClipSample make_synthetic_clip(const SyntheticOptions& options, int64_t index);
std::vector<ClipSample> make_synthetic_set(int64_t count, const SyntheticOptions& options);

/// Writes a dataset in the ingest layout (videos/<id>.mp4 with an audio
/// track, faces/<id>.json, fixations/<id>.csv) from synthetic content drawn
/// at `source_width`×`source_height`. `frames[i]` is the frame count of video i.
void write_synthetic_dataset(const std::filesystem::path& root, const std::vector<int64_t>& frames,
                             int64_t source_width, int64_t source_height, uint64_t seed = 0);

}  // namespace avsal
