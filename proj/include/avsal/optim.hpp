// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "avsal/layers.hpp"

namespace avsal {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Parameters without a gradient in a step are
/// left untouched (their moments do not decay).
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Var>> params, AdamOptions options);

  void step();
  void zero_grad();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  int64_t steps() const { return steps_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  std::vector<std::pair<std::string, Var>> params_;
  std::vector<Moments> moments_;
  AdamOptions options_;
  int64_t steps_ = 0;
};

}  // namespace avsal
