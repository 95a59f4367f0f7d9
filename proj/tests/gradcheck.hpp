// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference gradient checker used by the unit and
// acceptance suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "avsal/autograd.hpp"

namespace avsal::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<param>[<index>] analytic=<a> numeric=<n>"
  int64_t entries_checked = 0;
  double max_abs_grad = 0.0;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries
/// whose true gradient is ~0 from dividing rounding noise by nothing.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Checks d(loss)/d(param) for every entry of every listed parameter (or a
/// seeded sample of `max_entries` entries per parameter when > 0).
inline GradCheckResult gradcheck(const std::function<Var()>& loss_fn,
                                 const std::vector<std::pair<std::string, Var>>& params, double step = 1e-6,
                                 int64_t max_entries = 0, uint64_t seed = 7, double floor = 1e-8) {
  for (const auto& [name, p] : params) const_cast<Var&>(p).zero_grad();
  {
    Var loss = loss_fn();
    backward(loss);
  }
  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (const auto& [name, p_const] : params) {
    Var p = p_const;
    const Tensor analytic = p.grad().empty() ? Tensor(p.shape(), 0.0) : p.grad();
    std::vector<int64_t> entries(static_cast<size_t>(p.value().numel()));
    for (size_t i = 0; i < entries.size(); ++i) entries[i] = static_cast<int64_t>(i);
    if (max_entries > 0 && static_cast<int64_t>(entries.size()) > max_entries) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(static_cast<size_t>(max_entries));
    }
    NoGradGuard no_grad;
    for (int64_t i : entries) {
      double& slot = p.mutable_value()[i];
      const double original = slot;
      slot = original + step;
      const double up = loss_fn().value()[0];
      slot = original - step;
      const double down = loss_fn().value()[0];
      slot = original;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[i], numeric, floor);
      result.max_abs_grad = std::max(result.max_abs_grad, std::abs(analytic[i]));
      ++result.entries_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic[i]) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

/// Fixed random projection so that sum(output ⊙ R) has generic gradients.
inline Tensor random_like(const Shape& shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace avsal::testing
