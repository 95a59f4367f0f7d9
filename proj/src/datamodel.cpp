// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/datamodel.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace avsal {
namespace {

constexpr double kDistributionTolerance = 1e-6;
constexpr double kDensityTolerance = 1e-5;

void check_nonnegative(const Tensor& values) {
  for (double v : values.values()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("saliency map contains a negative or non-finite value");
    }
  }
}

}  // namespace

SaliencyMap::SaliencyMap(Tensor values, MapForm form) : values_(std::move(values)), form_(form) {
  if (values_.rank() != 2) throw ShapeError("saliency map must be (H, W), got " + shape_to_string(values_.shape()));
  check_nonnegative(values_);
  if (form_ == MapForm::distribution && std::abs(values_.sum() - 1.0) > kDistributionTolerance) {
    throw ValidationError("distribution-form saliency map sums to " + std::to_string(values_.sum()));
  }
}

SaliencyMap normalize_map(const Tensor& values) {
  if (values.rank() != 2) throw ShapeError("saliency map must be (H, W), got " + shape_to_string(values.shape()));
  check_nonnegative(values);
  Tensor out = values;
  const double total = values.sum();
  if (total > 0.0) {
    for (double& v : out.values()) v /= total;
  } else {
    out.fill(1.0 / static_cast<double>(out.numel()));
  }
  return SaliencyMap(std::move(out), MapForm::distribution);
}

SaliencyMap normalize_map(const SaliencyMap& map) { return normalize_map(map.values()); }

std::vector<Violation> validate_clip(const ClipSample& s) {
  std::vector<Violation> out;
  auto add = [&out](std::string field, int64_t frame, std::optional<int> face, std::string msg) {
    out.push_back({std::move(field), frame, face, std::move(msg)});
  };

  if (s.frames.rank() != 4 || s.frames.dim(1) != 3 || s.frames.dim(2) != s.frames.dim(3)) {
    add("frames", -1, std::nullopt, "expected (T, 3, H, H), got " + shape_to_string(s.frames.shape()));
    return out;
  }
  const int64_t t_len = s.frames.dim(0);
  const double size = static_cast<double>(s.frames.dim(3));

  if (s.audio_windows.rank() != 3 || s.audio_windows.dim(0) != t_len) {
    add("audio_windows", -1, std::nullopt,
        "expected " + std::to_string(t_len) + " windows, got shape " + shape_to_string(s.audio_windows.shape()));
  }
  if (static_cast<int64_t>(s.gt_fixations.size()) != t_len) {
    add("gt_fixations", -1, std::nullopt,
        "expected " + std::to_string(t_len) + " frames, got " + std::to_string(s.gt_fixations.size()));
  }
  if (static_cast<int64_t>(s.gt_density.size()) != t_len) {
    add("gt_density", -1, std::nullopt,
        "expected " + std::to_string(t_len) + " frames, got " + std::to_string(s.gt_density.size()));
  }

  std::set<int> ids;
  for (const FaceTrack& track : s.face_tracks) {
    if (!ids.insert(track.face_id).second) {
      add("face_tracks.face_id", -1, track.face_id, "duplicate face_id");
    }
    if (static_cast<int64_t>(track.boxes.size()) != t_len || static_cast<int64_t>(track.talking.size()) != t_len ||
        (!track.landmarks.empty() && static_cast<int64_t>(track.landmarks.size()) != t_len)) {
      add("face_tracks", -1, track.face_id, "per-frame sequences must have length " + std::to_string(t_len));
    }
    for (size_t t = 0; t < track.boxes.size(); ++t) {
      if (!track.boxes[t]) continue;
      const Box& b = *track.boxes[t];
      if (!(b.w > 0.0 && b.h > 0.0)) {
        add("face_tracks.boxes", static_cast<int64_t>(t), track.face_id, "box has non-positive size");
      } else if (b.x < 0.0 || b.y < 0.0 || b.x + b.w > size || b.y + b.h > size) {
        add("face_tracks.boxes", static_cast<int64_t>(t), track.face_id, "box extends past the frame edge");
      }
    }
  }

  for (size_t t = 0; t < s.gt_fixations.size(); ++t) {
    for (const FixationPoint& f : s.gt_fixations[t]) {
      if (!(f.x >= 0.0 && f.x < size && f.y >= 0.0 && f.y < size)) {
        add("gt_fixations", static_cast<int64_t>(t), std::nullopt, "fixation outside the frame");
        break;
      }
    }
  }
  for (size_t t = 0; t < s.gt_density.size(); ++t) {
    const SaliencyMap& m = s.gt_density[t];
    if (m.height() != s.frames.dim(2) || m.width() != s.frames.dim(3)) {
      add("gt_density", static_cast<int64_t>(t), std::nullopt, "density shape differs from frame shape");
    } else if (std::abs(m.sum() - 1.0) > kDensityTolerance) {
      add("gt_density", static_cast<int64_t>(t), std::nullopt,
          "density not normalized (sum " + std::to_string(m.sum()) + ")");
    }
  }
  return out;
}

std::string to_string(const Violation& v) {
  std::ostringstream os;
  os << v.field;
  if (v.face_id) os << " face_id=" << *v.face_id;
  if (v.frame >= 0) os << " frame=" << v.frame;
  os << ": " << v.message;
  return os.str();
}

}  // namespace avsal
