// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace avsal {

Var ParameterStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw std::logic_error("duplicate parameter " + name);
  Var v(std::move(init), true);
  entries_.emplace_back(name, v);
  return v;
}

const Var& ParameterStore::get(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  throw std::out_of_range("unknown parameter " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return true;
  return false;
}

std::vector<std::pair<std::string, Var>> ParameterStore::with_prefix(const std::string& prefix) const {
  std::vector<std::pair<std::string, Var>> out;
  for (const auto& e : entries_)
    if (e.first.compare(0, prefix.size(), prefix) == 0) out.push_back(e);
  return out;
}

int64_t ParameterStore::count() const {
  int64_t n = 0;
  for (const auto& [name, v] : entries_) n += v.value().numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

Tensor he_normal(const Shape& shape, int64_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(std::max<int64_t>(fan_in, 1))));
  Tensor t(shape);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor uniform(const Shape& shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(shape);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int64_t in, int64_t out, int kernel, int stride,
               int padding, bool bias, Rng& rng)
    : stride_(stride), padding_(padding) {
  weight_ = store.add(name + ".weight", he_normal({out, in, kernel, kernel}, in * kernel * kernel, rng));
  if (bias) bias_ = store.add(name + ".bias", Tensor({out}, 0.0));
}

Var Conv2d::operator()(const Var& x) const { return ops::conv2d(x, weight_, bias_, stride_, padding_); }

ConvTranspose2d::ConvTranspose2d(ParameterStore& store, const std::string& name, int64_t in, int64_t out,
                                 int kernel, int stride, int padding, Rng& rng)
    : stride_(stride), padding_(padding) {
  // Each output pixel receives about in·k²/stride² contributions.
  const int64_t fan = std::max<int64_t>(1, in * kernel * kernel / (stride * stride));
  weight_ = store.add(name + ".weight", he_normal({in, out, kernel, kernel}, fan, rng));
  bias_ = store.add(name + ".bias", Tensor({out}, 0.0));
}

Var ConvTranspose2d::operator()(const Var& x) const {
  return ops::conv_transpose2d(x, weight_, bias_, stride_, padding_);
}

Conv3d::Conv3d(ParameterStore& store, const std::string& name, int64_t in, int64_t out, int kernel,
               std::array<int, 3> stride, std::array<int, 3> padding, Rng& rng)
    : stride_(stride), padding_(padding) {
  weight_ = store.add(name + ".weight",
                      he_normal({out, in, kernel, kernel, kernel}, in * kernel * kernel * kernel, rng));
  bias_ = store.add(name + ".bias", Tensor({out}, 0.0));
}

Var Conv3d::operator()(const Var& x) const { return ops::conv3d(x, weight_, bias_, stride_, padding_); }

Linear::Linear(ParameterStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng) {
  weight_ = store.add(name + ".weight", he_normal({out, in}, in, rng));
  bias_ = store.add(name + ".bias", Tensor({out}, 0.0));
}

Var Linear::operator()(const Var& x) const { return ops::linear(x, weight_, bias_); }

RecurrentState lstm_update(const Var& gates, const Var& cell, int64_t hidden) {
  const Var input = ops::sigmoid(ops::slice(gates, 1, 0, hidden));
  const Var forget = ops::sigmoid(ops::slice(gates, 1, hidden, 2 * hidden));
  const Var output = ops::sigmoid(ops::slice(gates, 1, 2 * hidden, 3 * hidden));
  const Var candidate = ops::tanh(ops::slice(gates, 1, 3 * hidden, 4 * hidden));
  Var next_cell = ops::add(ops::mul(forget, cell), ops::mul(input, candidate));
  Var next_hidden = ops::mul(output, ops::tanh(next_cell));
  return {std::move(next_hidden), std::move(next_cell)};
}

namespace {

// Forget-gate bias starts at 1 so early training keeps cell memory.
void init_forget_bias(const ParameterStore& store, const std::string& bias_name, int64_t hidden) {
  Var b = store.get(bias_name);
  for (int64_t i = hidden; i < 2 * hidden; ++i) b.mutable_value()[i] = 1.0;
}

}  // namespace

LstmCell::LstmCell(ParameterStore& store, const std::string& name, int64_t in, int64_t hidden, Rng& rng)
    : hidden_(hidden) {
  gates_ = Linear(store, name + ".gates", in + hidden, 4 * hidden, rng);
  // Recurrent matrices use the ±1/sqrt(H) uniform range instead of He.
  Var w = store.get(name + ".gates.weight");
  w.mutable_value() = uniform(w.shape(), 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  init_forget_bias(store, name + ".gates.bias", hidden);
}

RecurrentState LstmCell::zero_state(int64_t batch) const {
  return {Var(Tensor({batch, hidden_}, 0.0)), Var(Tensor({batch, hidden_}, 0.0))};
}

RecurrentState LstmCell::step(const Var& x, const RecurrentState& state) const {
  const Var parts[] = {x, state.hidden};
  return lstm_update(gates_(ops::concat(parts, 1)), state.cell, hidden_);
}

ConvLstmCell::ConvLstmCell(ParameterStore& store, const std::string& name, int64_t in, int64_t hidden, int kernel,
                           Rng& rng)
    : hidden_(hidden) {
  gates_ = Conv2d(store, name + ".gates", in + hidden, 4 * hidden, kernel, 1, kernel / 2, true, rng);
  init_forget_bias(store, name + ".gates.bias", hidden);
}

RecurrentState ConvLstmCell::zero_state(int64_t batch, int64_t height, int64_t width) const {
  return {Var(Tensor({batch, hidden_, height, width}, 0.0)), Var(Tensor({batch, hidden_, height, width}, 0.0))};
}

RecurrentState ConvLstmCell::step(const Var& x, const RecurrentState& state) const {
  const Var parts[] = {x, state.hidden};
  return lstm_update(gates_(ops::concat(parts, 1)), state.cell, hidden_);
}

}  // namespace avsal
