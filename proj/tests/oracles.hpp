// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force metric references in long double. Nothing here calls into the
// library's metric code.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "avsal/datamodel.hpp"

namespace avsal::oracle {

using Real = long double;

inline int64_t pixel_of(const Tensor& s, double x, double y) {
  return static_cast<int64_t>(std::floor(y)) * s.dim(1) + static_cast<int64_t>(std::floor(x));
}

inline Real oracle_mean(const Tensor& s) {
  Real acc = 0;
  for (int64_t i = 0; i < s.numel(); ++i) acc += s[i];
  return acc / s.numel();
}

inline Real oracle_std(const Tensor& s) {
  const Real m = oracle_mean(s);
  Real acc = 0;
  for (int64_t i = 0; i < s.numel(); ++i) acc += (s[i] - m) * (s[i] - m);
  return std::sqrt(acc / s.numel());
}

inline double oracle_nss(const Tensor& s, const std::vector<FixationPoint>& fix) {
  const Real m = oracle_mean(s), sd = oracle_std(s);
  if (sd == 0) return 0.0;
  Real acc = 0;
  for (const auto& f : fix) acc += (s[pixel_of(s, f.x, f.y)] - m) / sd;
  return static_cast<double>(acc / fix.size());
}

inline double oracle_cc(const Tensor& a, const Tensor& b) {
  const Real ma = oracle_mean(a), mb = oracle_mean(b);
  Real sab = 0, saa = 0, sbb = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

inline double oracle_kl(const Tensor& s, const Tensor& g) {
  Real z = 0;
  for (int64_t i = 0; i < s.numel(); ++i) z += std::max<Real>(s[i], 1e-7L);
  Real acc = 0;
  for (int64_t i = 0; i < s.numel(); ++i) {
    if (g[i] <= 0) continue;
    acc += g[i] * std::log(g[i] / (std::max<Real>(s[i], 1e-7L) / z));
  }
  return static_cast<double>(acc);
}

// Thresholds at each distinct fixated value, every count done by scanning
// all pixels and all fixations.
inline double oracle_auc(const Tensor& s, const std::vector<FixationPoint>& fix) {
  std::set<double, std::greater<>> thresholds;
  for (const auto& f : fix) thresholds.insert(s[pixel_of(s, f.x, f.y)]);
  std::vector<std::pair<Real, Real>> roc = {{0, 0}};
  for (double thr : thresholds) {
    Real tp = 0, fp = 0;
    for (const auto& f : fix) tp += s[pixel_of(s, f.x, f.y)] >= thr;
    for (int64_t i = 0; i < s.numel(); ++i) fp += s[i] >= thr;
    roc.push_back({fp / s.numel(), tp / fix.size()});
  }
  roc.push_back({1, 1});
  Real area = 0;
  for (size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].first - roc[i - 1].first) * (roc[i].second + roc[i - 1].second) / 2;
  return static_cast<double>(area);
}

inline Tensor random_distribution(int64_t h, int64_t w, std::mt19937_64& rng, bool quantized) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({h, w});
  for (double& v : t.values()) v = quantized ? std::floor(u(rng) * 6.0) + 0.5 : std::pow(u(rng), 3.0);
  const double total = t.sum();
  for (double& v : t.values()) v /= total;
  return t;
}

inline std::vector<FixationPoint> random_fixations(int64_t h, int64_t w, int count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(w)), uy(0.0, static_cast<double>(h));
  std::vector<FixationPoint> out;
  for (int i = 0; i < count; ++i) out.push_back({std::min(ux(rng), w - 1e-9), std::min(uy(rng), h - 1e-9), i});
  return out;
}

// Band whose HTK-mel triangle responds most to `hz`: band m spans the mel
// points m .. m+2 of 66 evenly spaced points on [0, mel(11025)].
inline int64_t oracle_mel_band(double hz, int64_t n_mels, double f_max) {
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto inv = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double top = mel(f_max);
  std::vector<double> edges;
  for (int64_t i = 0; i < n_mels + 2; ++i) edges.push_back(inv(top * static_cast<double>(i) / (n_mels + 1)));
  int64_t best = -1;
  double best_resp = -1.0;
  for (int64_t m = 0; m < n_mels; ++m) {
    const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
    const double resp = std::max(0.0, std::min((hz - l) / (c - l), (r - hz) / (r - c)));
    if (resp > best_resp) {
      best_resp = resp;
      best = m;
    }
  }
  return best;
}

}  // namespace avsal::oracle
