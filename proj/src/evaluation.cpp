// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace avsal {
namespace {

void require_map(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + " must be (H, W), got " + shape_to_string(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b) {
  require_map(a, "saliency map");
  if (a.shape() != b.shape()) {
    throw ShapeError("map shapes differ: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

int64_t pixel_index(const Tensor& s, double x, double y) {
  const int64_t h = s.dim(0), w = s.dim(1);
  const int64_t r = std::clamp<int64_t>(static_cast<int64_t>(std::floor(y)), 0, h - 1);
  const int64_t c = std::clamp<int64_t>(static_cast<int64_t>(std::floor(x)), 0, w - 1);
  return r * w + c;
}

struct Moments {
  double mean = 0.0, std = 0.0;
};

Moments moments(std::span<const double> v) {
  // Summation rounding leaves a tiny spread on constant maps.
  if (!v.empty() && std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) return {v.front(), 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

template <typename P>
std::optional<double> nss_at(const Tensor& s, std::span<const P> points) {
  require_map(s, "saliency map");
  if (points.empty()) return std::nullopt;
  const Moments m = moments(s.values());
  if (m.std == 0.0) return 0.0;
  double acc = 0.0;
  for (const P& p : points) acc += (s[pixel_index(s, p.x, p.y)] - m.mean) / m.std;
  return acc / static_cast<double>(points.size());
}

}  // namespace

double kl_divergence(std::span<const double> g, std::span<const double> s) {
  if (g.size() != s.size()) throw ShapeError("KL operands differ in size");
  double z = 0.0;
  for (double v : s) z += std::max(v, kKlEpsilon);
  double kl = 0.0;
  for (size_t i = 0; i < g.size(); ++i) {
    if (g[i] <= 0.0) continue;
    kl += g[i] * std::log(g[i] * z / std::max(s[i], kKlEpsilon));
  }
  return kl;
}

void kl_divergence_grad(std::span<const double> g, std::span<const double> s, std::span<double> grad) {
  double z = 0.0, mass = 0.0;
  for (double v : s) z += std::max(v, kKlEpsilon);
  for (double v : g) mass += std::max(v, 0.0);
  for (size_t i = 0; i < g.size(); ++i) {
    const double pass = s[i] > kKlEpsilon ? 1.0 : 0.0;
    const double gi = std::max(g[i], 0.0);
    grad[i] = pass * (mass / z - gi / std::max(s[i], kKlEpsilon));
  }
}

double metric_kl(const Tensor& s, const Tensor& g) {
  require_same(s, g);
  return kl_divergence(g.values(), s.values());
}

std::optional<double> pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("correlation inputs differ in length");
  if (x.size() < 2) return std::nullopt;
  const Moments mx = moments(x), my = moments(y);
  if (mx.std == 0.0 || my.std == 0.0) return std::nullopt;
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += (x[i] - mx.mean) * (y[i] - my.mean);
  return acc / (static_cast<double>(x.size()) * mx.std * my.std);
}

double metric_cc(const Tensor& s, const Tensor& g) {
  require_same(s, g);
  return pearson_correlation(s.values(), g.values()).value_or(0.0);
}

std::optional<double> metric_nss(const Tensor& s, std::span<const FixationPoint> fixations) {
  return nss_at(s, fixations);
}

std::optional<double> metric_nss(const Tensor& s, std::span<const Point> points) { return nss_at(s, points); }

std::optional<double> metric_auc_judd(const Tensor& s, std::span<const FixationPoint> fixations) {
  require_map(s, "saliency map");
  if (fixations.empty()) return std::nullopt;
  std::vector<double> thresholds;
  thresholds.reserve(fixations.size());
  for (const FixationPoint& f : fixations) thresholds.push_back(s[pixel_index(s, f.x, f.y)]);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  std::vector<double> sorted(s.values().begin(), s.values().end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  const double nfix = static_cast<double>(thresholds.size()), npix = static_cast<double>(sorted.size());
  double area = 0.0, prev_tp = 0.0, prev_fp = 0.0;
  size_t above = 0;  // pixels >= current threshold
  for (size_t i = 0; i < thresholds.size(); ++i) {
    const double thr = thresholds[i];
    if (i + 1 < thresholds.size() && thresholds[i + 1] == thr) continue;  // tied fixations form one point
    while (above < sorted.size() && sorted[above] >= thr) ++above;
    const double tp = static_cast<double>(i + 1) / nfix, fp = static_cast<double>(above) / npix;
    area += (fp - prev_fp) * (tp + prev_tp) / 2.0;
    prev_tp = tp;
    prev_fp = fp;
  }
  area += (1.0 - prev_fp) * (1.0 + prev_tp) / 2.0;
  return area;
}

double stat_entropy(const Tensor& p) {
  require_map(p, "distribution");
  double total = 0.0;
  for (double v : p.values()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("entropy input has a negative or non-finite value");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ValidationError("entropy input is not a distribution (sum " +
                                                          std::to_string(total) + ")");
  double h = 0.0;
  for (double v : p.values())
    if (v > 0.0) h -= v * std::log2(v);
  return h;
}

std::optional<double> stat_dispersion(std::span<const FixationPoint> fixations) {
  if (fixations.size() < 2) return std::nullopt;
  double acc = 0.0;
  int64_t pairs = 0;
  for (size_t i = 0; i < fixations.size(); ++i)
    for (size_t j = i + 1; j < fixations.size(); ++j) {
      acc += std::hypot(fixations[i].x - fixations[j].x, fixations[i].y - fixations[j].y);
      ++pairs;
    }
  return acc / static_cast<double>(pairs);
}

std::array<std::optional<double>, 3> stat_landmark_nss(const Tensor& s, const FaceLandmarks& landmarks) {
  std::array<std::optional<double>, 3> out;
  for (size_t c = 0; c < 3; ++c) out[c] = metric_nss(s, std::span<const Point>(landmarks.points[c]));
  return out;
}

std::optional<double> stat_contextual_nss(const Tensor& flow_magnitude, std::span<const FixationPoint> fixations) {
  return metric_nss(flow_magnitude, fixations);
}

std::vector<TurnEvent> turn_events(const std::vector<FaceTrack>& tracks) {
  size_t length = 0;
  for (const FaceTrack& t : tracks) length = std::max(length, t.talking.size());
  std::vector<TurnEvent> out;
  std::optional<int> previous;
  for (size_t t = 0; t < length; ++t) {
    std::optional<int> talker;
    for (const FaceTrack& track : tracks) {
      if (t < track.talking.size() && track.talking[t] && track.present(t)) {
        talker = track.face_id;
        break;
      }
    }
    if (t > 0 && talker && talker != previous) out.push_back({static_cast<int64_t>(t), *talker});
    if (talker) previous = talker;
  }
  return out;
}

TransitionStats stat_transition_time(const std::vector<std::vector<FixationPoint>>& fixations,
                                     const std::vector<FaceTrack>& tracks, std::span<const TurnEvent> events,
                                     double threshold) {
  TransitionStats out;
  out.events = static_cast<int64_t>(events.size());
  const int64_t length = static_cast<int64_t>(fixations.size());
  for (size_t e = 0; e < events.size(); ++e) {
    const TurnEvent& ev = events[e];
    const int64_t stop = e + 1 < events.size() ? std::min(events[e + 1].frame, length) : length;
    const FaceTrack* track = nullptr;
    for (const FaceTrack& t : tracks)
      if (t.face_id == ev.face_id) track = &t;
    std::optional<int64_t> reached;
    for (int64_t t = ev.frame; track != nullptr && t < stop && !reached; ++t) {
      const auto& fx = fixations[static_cast<size_t>(t)];
      if (fx.empty() || !track->present(static_cast<size_t>(t))) continue;
      const Box& box = *track->boxes[static_cast<size_t>(t)];
      int64_t inside = 0;
      for (const FixationPoint& f : fx) inside += box.contains(f.x, f.y) ? 1 : 0;
      if (static_cast<double>(inside) >= threshold * static_cast<double>(fx.size())) reached = t - ev.frame;
    }
    if (reached) {
      out.per_event.push_back(*reached);
    } else {
      ++out.unreached;
    }
  }
  if (!out.per_event.empty()) {
    double acc = 0.0;
    for (int64_t v : out.per_event) acc += static_cast<double>(v);
    out.mean_frames = acc / static_cast<double>(out.per_event.size());
  }
  return out;
}

namespace {

struct Accumulator {
  MetricRow row;
  double auc = 0.0, nss = 0.0, cc = 0.0, kl = 0.0;

  void add(const FrameEval& f) {
    ++row.frames;
    cc += metric_cc(f.prediction, f.density);
    kl += metric_kl(f.prediction, f.density);
    const auto a = metric_auc_judd(f.prediction, f.fixations);
    const auto n = metric_nss(f.prediction, std::span<const FixationPoint>(f.fixations));
    if (a && n) {
      ++row.fixation_frames;
      auc += *a;
      nss += *n;
    }
  }
  MetricRow finish() const {
    MetricRow r = row;
    if (r.frames > 0) {
      r.cc = cc / static_cast<double>(r.frames);
      r.kl = kl / static_cast<double>(r.frames);
    }
    if (r.fixation_frames > 0) {
      r.auc = auc / static_cast<double>(r.fixation_frames);
      r.nss = nss / static_cast<double>(r.fixation_frames);
    } else {
      r.auc = r.nss = std::nan("");
    }
    return r;
  }
};

}  // namespace

MetricReport evaluate_frames(std::span<const FrameEval> frames) {
  std::map<std::string, Accumulator> per_video;
  Accumulator all;
  all.row.video = "ALL";
  for (const FrameEval& f : frames) {
    Accumulator& acc = per_video[f.video];
    acc.row.video = f.video;
    acc.add(f);
    all.add(f);
  }
  MetricReport report;
  for (const auto& [name, acc] : per_video) report.videos.push_back(acc.finish());
  report.aggregate = all.finish();
  return report;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(10) << "video,frames,fixation_frames,auc,nss,cc,kl\n";
  auto line = [&os](const MetricRow& r) {
    os << r.video << ',' << r.frames << ',' << r.fixation_frames << ',' << r.auc << ',' << r.nss << ',' << r.cc
       << ',' << r.kl << '\n';
  };
  for (const MetricRow& r : videos) line(r);
  line(aggregate);
  return os.str();
}

std::string MetricReport::to_table() const {
  std::ostringstream os;
  os << std::left << std::setw(20) << "video" << std::right << std::setw(8) << "frames" << std::setw(9) << "AUC"
     << std::setw(9) << "NSS" << std::setw(9) << "CC" << std::setw(9) << "KL" << '\n';
  auto line = [&os](const MetricRow& r) {
    os << std::left << std::setw(20) << r.video << std::right << std::setw(8) << r.frames << std::fixed
       << std::setprecision(4) << std::setw(9) << r.auc << std::setw(9) << r.nss << std::setw(9) << r.cc
       << std::setw(9) << r.kl << '\n';
    os.unsetf(std::ios::fixed);
  };
  for (const MetricRow& r : videos) line(r);
  os << std::string(64, '-') << '\n';
  line(aggregate);
  return os.str();
}

}  // namespace avsal
