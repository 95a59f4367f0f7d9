// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Saliency metrics (AUC-Judd, NSS, CC, KL) and dataset statistics
// (entropy, dispersion, landmark NSS, contextual NSS, transition time).
// Maps are (H, W) tensors; a fixation at (x, y) falls on pixel
// (floor(y), floor(x)).

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avsal/datamodel.hpp"

namespace avsal {

inline constexpr double kKlEpsilon = 1e-7;

/// Σ g · log(g / ŝ) where ŝ is s clamped below at 1e-7 and renormalized;
/// 0 · log 0 = 0. Used by both metric_kl and the training loss.
double kl_divergence(std::span<const double> g, std::span<const double> s);
/// ∂KL/∂s for the same definition, written into `grad`.
void kl_divergence_grad(std::span<const double> g, std::span<const double> s, std::span<double> grad);

double metric_kl(const Tensor& s, const Tensor& g);
/// Pearson correlation; nullopt for fewer than two samples or a constant
/// input.
std::optional<double> pearson_correlation(std::span<const double> x, std::span<const double> y);
/// Pearson correlation over pixels; 0 when either map is constant.
double metric_cc(const Tensor& s, const Tensor& g);
/// Mean z-scored saliency at fixated pixels; 0 for a constant map;
/// nullopt without fixations.
std::optional<double> metric_nss(const Tensor& s, std::span<const FixationPoint> fixations);
std::optional<double> metric_nss(const Tensor& s, std::span<const Point> points);
/// ROC area with thresholds at the fixated pixels' values: TPR is the
/// fraction of fixations at or above the threshold, FPR the fraction of all
/// pixels at or above it; trapezoidal integration from (0,0) to (1,1).
std::optional<double> metric_auc_judd(const Tensor& s, std::span<const FixationPoint> fixations);

/// −Σ p log₂ p in bits. Throws ValidationError unless `p` is a distribution.
double stat_entropy(const Tensor& p);
/// Mean pairwise Euclidean distance; nullopt for fewer than two fixations.
std::optional<double> stat_dispersion(std::span<const FixationPoint> fixations);

/// NSS of `s` at each landmark class; nullopt for missing classes.
std::array<std::optional<double>, 3> stat_landmark_nss(const Tensor& s, const FaceLandmarks& landmarks);
/// NSS of an externally supplied flow-magnitude map at the fixations.
std::optional<double> stat_contextual_nss(const Tensor& flow_magnitude, std::span<const FixationPoint> fixations);

struct TurnEvent {
  int64_t frame = 0;
  int face_id = 0;  // the new talker
};

/// Frames where the talking face changes to a different, present talker.
std::vector<TurnEvent> turn_events(const std::vector<FaceTrack>& tracks);

struct TransitionStats {
  std::optional<double> mean_frames;   // nullopt when no event reached the threshold
  std::vector<int64_t> per_event;      // frames until transition, reached events only
  int64_t events = 0;
  int64_t unreached = 0;               // events never reaching the threshold before the next one
};

/// For each event, the number of frames until at least half of a frame's
/// fixations lie inside the new talker's box, searched up to the next event
/// or the end of the sequence.
TransitionStats stat_transition_time(const std::vector<std::vector<FixationPoint>>& fixations,
                                     const std::vector<FaceTrack>& tracks, std::span<const TurnEvent> events,
                                     double threshold = 0.5);

// ---------------------------------------------------------------- reports

struct FrameEval {
  std::string video;
  int64_t frame = 0;
  Tensor prediction;  // (H, W) distribution
  Tensor density;     // (H, W) distribution
  std::vector<FixationPoint> fixations;
};

struct MetricRow {
  std::string video;
  int64_t frames = 0;
  int64_t fixation_frames = 0;  // frames contributing to AUC and NSS
  double auc = 0.0, nss = 0.0, cc = 0.0, kl = 0.0;
};

/// Per-video rows and an aggregate row; every value is a plain mean over
/// frames.
struct MetricReport {
  std::vector<MetricRow> videos;
  MetricRow aggregate;

  std::string to_csv() const;
  std::string to_table() const;
};

MetricReport evaluate_frames(std::span<const FrameEval> frames);

}  // namespace avsal
