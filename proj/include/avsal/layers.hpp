// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "avsal/ops.hpp"

namespace avsal {

using Rng = std::mt19937_64;

/// Named, insertion-ordered collection of trainable leaves. Names are
/// dotted paths ("visual.rgb.conv1_1.weight") and double as checkpoint keys.
class ParameterStore {
 public:
  Var add(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Var>> with_prefix(const std::string& prefix) const;
  int64_t count() const;

  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

/// He-normal weights (std = sqrt(2 / fan_in)), zero bias.
Tensor he_normal(const Shape& shape, int64_t fan_in, Rng& rng);
Tensor uniform(const Shape& shape, double bound, Rng& rng);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int64_t in, int64_t out, int kernel, int stride,
         int padding, bool bias, Rng& rng);
  Var operator()(const Var& x) const;
  const Var& weight() const { return weight_; }
  int64_t out_channels() const { return weight_.dim(0); }

 private:
  Var weight_, bias_;
  int stride_ = 1, padding_ = 0;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterStore& store, const std::string& name, int64_t in, int64_t out, int kernel, int stride,
                  int padding, Rng& rng);
  Var operator()(const Var& x) const;

 private:
  Var weight_, bias_;
  int stride_ = 1, padding_ = 0;
};

class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(ParameterStore& store, const std::string& name, int64_t in, int64_t out, int kernel,
         std::array<int, 3> stride, std::array<int, 3> padding, Rng& rng);
  Var operator()(const Var& x) const;

 private:
  Var weight_, bias_;
  std::array<int, 3> stride_{1, 1, 1}, padding_{0, 0, 0};
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng);
  Var operator()(const Var& x) const;

 private:
  Var weight_, bias_;
};

/// Hidden and cell state of a recurrent layer.
struct RecurrentState {
  Var hidden;
  Var cell;
};

/// Fully connected LSTM cell over (B, in) inputs. Gate order i, f, o, g.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParameterStore& store, const std::string& name, int64_t in, int64_t hidden, Rng& rng);
  RecurrentState step(const Var& x, const RecurrentState& state) const;
  RecurrentState zero_state(int64_t batch) const;
  int64_t hidden_size() const { return hidden_; }

 private:
  Linear gates_;
  int64_t hidden_ = 0;
};

/// Convolutional LSTM cell: every gate is a k×k convolution over
/// concat(x, h). Spatial size is preserved.
class ConvLstmCell {
 public:
  ConvLstmCell() = default;
  ConvLstmCell(ParameterStore& store, const std::string& name, int64_t in, int64_t hidden, int kernel, Rng& rng);
  RecurrentState step(const Var& x, const RecurrentState& state) const;
  RecurrentState zero_state(int64_t batch, int64_t height, int64_t width) const;
  int64_t hidden_size() const { return hidden_; }

 private:
  Conv2d gates_;
  int64_t hidden_ = 0;
};

/// Stacks a gate pre-activation (B, 4H, ...) into the next LSTM state.
RecurrentState lstm_update(const Var& gates, const Var& cell, int64_t hidden);

}  // namespace avsal
