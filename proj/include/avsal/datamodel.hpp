// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Core data types shared across ingestion, modeling and evaluation. All
// coordinates are pixels of the square model-resolution frame (256×256 in the
// canonical pipeline); fixations recorded at source resolution are rescaled
// when a dataset is ingested.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avsal/errors.hpp"
#include "avsal/tensor.hpp"

namespace avsal {

enum class MapForm { raw, distribution };

/// Nonnegative H×W grid. Distribution-form maps sum to 1 (±1e-6).
class SaliencyMap {
 public:
  SaliencyMap() = default;
  /// `values` must be (H, W). Throws ValidationError on negative or
  /// non-finite entries, or on a distribution whose mass is not 1.
  SaliencyMap(Tensor values, MapForm form);

  int64_t height() const { return values_.empty() ? 0 : values_.dim(0); }
  int64_t width() const { return values_.empty() ? 0 : values_.dim(1); }
  MapForm form() const { return form_; }
  const Tensor& values() const { return values_; }
  double at(int64_t y, int64_t x) const { return values_[y * width() + x]; }
  double sum() const { return values_.sum(); }

  friend bool operator==(const SaliencyMap&, const SaliencyMap&) = default;

 private:
  Tensor values_;
  MapForm form_ = MapForm::raw;
};

struct FixationPoint {
  double x = 0.0;
  double y = 0.0;
  int subject_id = 0;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned box, (x, y) is the top-left corner.
struct Box {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;

  Point center() const { return {x + w / 2.0, y + h / 2.0}; }
  double area() const { return w * h; }
  /// Strict containment of the open box interior.
  bool contains(double px, double py) const { return px > x && px < x + w && py > y && py < y + h; }
};

enum class LandmarkClass { eyes = 0, nose = 1, mouth = 2 };
inline constexpr std::array<const char*, 3> kLandmarkNames{"eyes", "nose", "mouth"};

/// Points per landmark class; an empty list means the class is missing.
struct FaceLandmarks {
  std::array<std::vector<Point>, 3> points;

  const std::vector<Point>& of(LandmarkClass c) const { return points[static_cast<size_t>(c)]; }
  std::vector<Point>& of(LandmarkClass c) { return points[static_cast<size_t>(c)]; }
};

struct FaceTrack {
  int face_id = 0;
  std::vector<std::optional<Box>> boxes;                // per frame
  std::vector<bool> talking;                            // per frame
  std::vector<std::optional<FaceLandmarks>> landmarks;  // per frame

  bool present(size_t t) const { return t < boxes.size() && boxes[t].has_value(); }
};

/// One training/inference unit of T aligned frames.
struct ClipSample {
  std::string video_id;
  int64_t first_frame = 0;
  double frame_rate = 25.0;
  Tensor frames;         // (T, 3, H, W), RGB in [0, 1]
  Tensor audio_windows;  // (T, H, W), spectrogram images in [0, 1]
  std::vector<FaceTrack> face_tracks;
  std::vector<std::vector<FixationPoint>> gt_fixations;  // per frame
  std::vector<SaliencyMap> gt_density;                   // per frame

  int64_t length() const { return frames.empty() ? 0 : frames.dim(0); }
  int64_t resolution() const { return frames.empty() ? 0 : frames.dim(3); }
};

/// T feature grids of identical (C, h, w), stored as one (T, C, h, w) tensor.
struct FeatureMapSeq {
  Tensor maps;
  int stride = 1;

  int64_t length() const { return maps.empty() ? 0 : maps.dim(0); }
  int64_t channels() const { return maps.dim(1); }
  int64_t height() const { return maps.dim(2); }
  int64_t width() const { return maps.dim(3); }
};

struct Violation {
  std::string field;
  int64_t frame = -1;  // -1 when the violation is not frame-specific
  std::optional<int> face_id;
  std::string message;
};

/// Proportional rescaling to unit mass; an all-zero map becomes uniform.
/// Throws ValidationError on negative entries.
SaliencyMap normalize_map(const SaliencyMap& map);
SaliencyMap normalize_map(const Tensor& values);

/// Lists every broken ClipSample invariant; empty when the clip is valid.
std::vector<Violation> validate_clip(const ClipSample& sample);

std::string to_string(const Violation& v);

}  // namespace avsal
