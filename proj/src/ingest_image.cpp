// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avsal/ingest.hpp"

namespace avsal {
namespace {

// Bilinear sample of one (H, W) plane at continuous pixel coordinates where
// pixel (r, c) sits at (c, r); coordinates are clamped to the plane.
double sample(const double* plane, int64_t h, int64_t w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int64_t y0 = static_cast<int64_t>(std::floor(y)), x0 = static_cast<int64_t>(std::floor(x));
  const int64_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
  const double bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
  return top * (1.0 - fy) + bottom * fy;
}

// Resamples the region [x0, x0 + rw) × [y0, y0 + rh) of every channel of a
// (C, H, W) image onto an (out_h, out_w) grid.
void resample_region(const double* src, int64_t channels, int64_t h, int64_t w, double x0, double y0, double rw,
                     double rh, int64_t out_h, int64_t out_w, double* dst) {
  const double sy = rh / static_cast<double>(out_h), sx = rw / static_cast<double>(out_w);
  for (int64_t c = 0; c < channels; ++c) {
    const double* plane = src + c * h * w;
    double* out = dst + c * out_h * out_w;
    for (int64_t i = 0; i < out_h; ++i) {
      const double y = y0 + (static_cast<double>(i) + 0.5) * sy - 0.5;
      for (int64_t j = 0; j < out_w; ++j) {
        out[i * out_w + j] = sample(plane, h, w, y, x0 + (static_cast<double>(j) + 0.5) * sx - 0.5);
      }
    }
  }
}

}  // namespace

std::vector<ClipRange> extract_clips(int64_t frame_count, int64_t length) {
  if (length < 1) throw ConfigError("clip length must be at least 1");
  std::vector<ClipRange> out;
  for (int64_t first = 0; first + length <= frame_count; first += length) out.push_back({first, length});
  return out;
}

Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w) {
  if (image.rank() != 3) throw ShapeError("resize expects (C, H, W), got " + shape_to_string(image.shape()));
  const int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out({c, out_h, out_w});
  resample_region(image.data(), c, h, w, 0.0, 0.0, static_cast<double>(w), static_cast<double>(h), out_h, out_w,
                  out.data());
  return out;
}

FaceCrops crop_faces(const Tensor& frames, const std::vector<FaceTrack>& tracks, int64_t size) {
  if (frames.rank() != 4 || frames.dim(1) != 3) {
    throw ShapeError("crop_faces expects (T, 3, H, W), got " + shape_to_string(frames.shape()));
  }
  const int64_t t_len = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
  std::vector<size_t> order(tracks.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&tracks](size_t a, size_t b) { return tracks[a].face_id < tracks[b].face_id; });

  const int64_t faces = static_cast<int64_t>(tracks.size());
  FaceCrops out;
  out.crops = Tensor({faces * t_len, 3, size, size}, 0.0);
  out.present = Tensor({t_len, faces}, 0.0);
  const int64_t frame_size = 3 * h * w, crop_size = 3 * size * size;
  for (int64_t n = 0; n < faces; ++n) {
    const FaceTrack& track = tracks[order[static_cast<size_t>(n)]];
    out.face_ids.push_back(track.face_id);
    for (int64_t t = 0; t < t_len; ++t) {
      if (!track.present(static_cast<size_t>(t))) continue;
      const Box& b = *track.boxes[static_cast<size_t>(t)];
      out.present[t * faces + n] = 1.0;
      resample_region(frames.data() + t * frame_size, 3, h, w, b.x, b.y, b.w, b.h, size, size,
                      out.crops.data() + (n * t_len + t) * crop_size);
    }
  }
  return out;
}

SaliencyMap fixation_density(std::span<const FixationPoint> fixations, int64_t height, int64_t width,
                             double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("density sigma must be positive");
  Tensor map({height, width}, 0.0);
  if (fixations.empty()) return normalize_map(map);
  std::vector<double> gx(static_cast<size_t>(width)), gy(static_cast<size_t>(height));
  for (const FixationPoint& f : fixations) {
    for (int64_t c = 0; c < width; ++c) {
      const double d = (static_cast<double>(c) + 0.5 - f.x) / sigma;
      gx[static_cast<size_t>(c)] = std::exp(-0.5 * d * d);
    }
    for (int64_t r = 0; r < height; ++r) {
      const double d = (static_cast<double>(r) + 0.5 - f.y) / sigma;
      gy[static_cast<size_t>(r)] = std::exp(-0.5 * d * d);
    }
    for (int64_t r = 0; r < height; ++r) {
      double* row = map.data() + r * width;
      const double wy = gy[static_cast<size_t>(r)];
      for (int64_t c = 0; c < width; ++c) row[c] += wy * gx[static_cast<size_t>(c)];
    }
  }
  return normalize_map(map);
}

SaliencyMap fixation_density(std::span<const FixationPoint> fixations, int64_t height, int64_t width) {
  return fixation_density(fixations, height, width, static_cast<double>(width) / 16.0);
}

FaceWeightTarget gt_face_weights(std::span<const FixationPoint> fixations, const std::vector<FaceTrack>& tracks,
                                 int64_t t) {
  FaceWeightTarget out;
  out.weights.assign(tracks.size(), 0.0);
  out.counts.assign(tracks.size(), 0);
  int64_t total = 0;
  for (const FixationPoint& f : fixations) {
    int best = -1;
    for (size_t n = 0; n < tracks.size(); ++n) {
      if (!tracks[n].present(static_cast<size_t>(t))) continue;
      const Box& b = *tracks[n].boxes[static_cast<size_t>(t)];
      if (!b.contains(f.x, f.y)) continue;
      if (best < 0 || b.area() < tracks[static_cast<size_t>(best)].boxes[static_cast<size_t>(t)]->area()) {
        best = static_cast<int>(n);
      }
    }
    if (best >= 0) {
      ++out.counts[static_cast<size_t>(best)];
      ++total;
    }
  }
  if (total == 0) return out;
  out.supervised = true;
  for (size_t n = 0; n < tracks.size(); ++n) {
    out.weights[n] = static_cast<double>(out.counts[n]) / static_cast<double>(total);
  }
  return out;
}

std::vector<FaceTrack> slice_tracks(const std::vector<FaceTrack>& tracks, int64_t first, int64_t count) {
  std::vector<FaceTrack> out;
  for (const FaceTrack& track : tracks) {
    FaceTrack s;
    s.face_id = track.face_id;
    bool any = false;
    for (int64_t t = first; t < first + count; ++t) {
      const size_t i = static_cast<size_t>(t);
      s.boxes.push_back(i < track.boxes.size() ? track.boxes[i] : std::nullopt);
      s.talking.push_back(i < track.talking.size() && track.talking[i]);
      s.landmarks.push_back(i < track.landmarks.size() ? track.landmarks[i] : std::nullopt);
      any = any || s.boxes.back().has_value();
    }
    if (any) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace avsal
