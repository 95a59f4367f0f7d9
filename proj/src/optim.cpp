// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/optim.hpp"

#include <cmath>

namespace avsal {

Adam::Adam(std::vector<std::pair<std::string, Var>> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  moments_.reserve(params_.size());
  for (const auto& [name, p] : params_) moments_.push_back({Tensor(p.shape(), 0.0), Tensor(p.shape(), 0.0)});
}

void Adam::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Var& p = params_[k].second;
    const Tensor& g = p.grad();
    if (g.empty()) continue;
    Tensor& m = moments_[k].m;
    Tensor& v = moments_[k].v;
    Tensor& value = p.mutable_value();
    for (int64_t i = 0; i < value.numel(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      value[i] -= options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

}  // namespace avsal
