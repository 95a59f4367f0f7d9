// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/face_branch.hpp"

#include <cmath>

namespace avsal {

GaussianKernelParams GaussianKernelParams::from_box(const Box& box) {
  return {box.center(), box.w / 2.0, box.h / 2.0};
}

double GaussianKernelParams::operator()(double x, double y) const {
  const double dx = (x - mu.x) / sigma_x, dy = (y - mu.y) / sigma_y;
  return std::exp(-0.5 * (dx * dx + dy * dy));
}

Tensor gaussian_kernel(const GaussianKernelParams& g, int64_t h, int64_t w) {
  std::vector<double> gx(static_cast<size_t>(w)), gy(static_cast<size_t>(h));
  for (int64_t c = 0; c < w; ++c) {
    const double d = (static_cast<double>(c) + 0.5 - g.mu.x) / g.sigma_x;
    gx[static_cast<size_t>(c)] = std::exp(-0.5 * d * d);
  }
  for (int64_t r = 0; r < h; ++r) {
    const double d = (static_cast<double>(r) + 0.5 - g.mu.y) / g.sigma_y;
    gy[static_cast<size_t>(r)] = std::exp(-0.5 * d * d);
  }
  Tensor out({h, w});
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c) out[r * w + c] = gy[static_cast<size_t>(r)] * gx[static_cast<size_t>(c)];
  return out;
}

Tensor compose_face_map(std::span<const double> weights, std::span<const GaussianKernelParams> kernels, int64_t h,
                        int64_t w) {
  if (weights.size() != kernels.size()) throw ShapeError("one weight per face kernel required");
  Tensor out({h, w}, 0.0);
  for (size_t n = 0; n < weights.size(); ++n) {
    const Tensor k = gaussian_kernel(kernels[n], h, w);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += weights[n] * k[i];
  }
  return out;
}

FaceBranch::FaceBranch(ParameterStore& store, const ModelConfig& config, Rng& rng) : config_(config) {
  const std::vector<std::vector<int64_t>> widths = {
      {64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
  int64_t in = 3;
  for (size_t b = 0; b < widths.size(); ++b) {
    std::vector<Conv2d> block;
    for (size_t i = 0; i < widths[b].size(); ++i) {
      const int64_t out = config.channels(widths[b][i]);
      const std::string name = "face.cnn.conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1);
      block.emplace_back(store, name, in, out, 3, 1, 1, true, rng);
      in = out;
    }
    blocks_.push_back(std::move(block));
  }
  const int64_t hidden = config.channels(256);
  lstm1_ = LstmCell(store, "face.lstm1", in, hidden, rng);
  lstm2_ = LstmCell(store, "face.lstm2", hidden, hidden, rng);
  score1_ = Linear(store, "face.score.fc1", 2 * hidden, config.channels(128), rng);
  score2_ = Linear(store, "face.score.fc2", config.channels(128), 1, rng);
}

Var FaceBranch::cnn(const Var& crops) const {
  const Shape& s = crops.shape();
  const int64_t side = config_.face_crop();
  if (s.size() != 4 || s[1] != 3 || s[2] != side || s[3] != side) {
    throw ShapeError("face stream expects (B, 3, " + std::to_string(side) + ", " + std::to_string(side) + "), got " +
                     shape_to_string(s));
  }
  Var x = crops;
  for (size_t b = 0; b < blocks_.size(); ++b) {
    for (const Conv2d& conv : blocks_[b]) x = ops::relu(conv(x));
    if (b + 1 < blocks_.size()) x = ops::max_pool2d(x, 2);
  }
  return ops::global_avg_pool(x);
}

Var FaceBranch::streams(const Var& crops, int64_t faces, const Tensor& present) const {
  if (faces <= 0) throw ShapeError("streams need at least one face");
  if (present.rank() != 2 || present.dim(1) != faces || crops.dim(0) != faces * present.dim(0)) {
    throw ShapeError("crops " + shape_to_string(crops.shape()) + " do not match presence mask " +
                     shape_to_string(present.shape()));
  }
  const int64_t t_len = present.dim(0);
  const Var features = cnn(crops);

  RecurrentState s1 = lstm1_.zero_state(faces), s2 = lstm2_.zero_state(faces);
  std::vector<Var> hidden;
  hidden.reserve(static_cast<size_t>(t_len));
  std::vector<int64_t> rows(static_cast<size_t>(faces));
  std::vector<double> mask(static_cast<size_t>(faces));
  for (int64_t t = 0; t < t_len; ++t) {
    for (int64_t n = 0; n < faces; ++n) {
      rows[static_cast<size_t>(n)] = n * t_len + t;
      mask[static_cast<size_t>(n)] = present[t * faces + n];
    }
    s1 = lstm1_.step(ops::index_select(features, rows), s1);
    s1 = {ops::scale_rows(s1.hidden, mask), ops::scale_rows(s1.cell, mask)};
    s2 = lstm2_.step(s1.hidden, s2);
    s2 = {ops::scale_rows(s2.hidden, mask), ops::scale_rows(s2.cell, mask)};
    hidden.push_back(s2.hidden);
  }
  return ops::concat(hidden, 0);
}

Var FaceBranch::stream(const Var& crops) const {
  return streams(crops, 1, Tensor({crops.dim(0), 1}, 1.0));
}

Var FaceBranch::fusion_weights(const Var& hidden, const Tensor& present) const {
  const int64_t t_len = present.dim(0), faces = present.dim(1);
  if (hidden.dim(0) != t_len * faces) throw ShapeError("hidden rows do not match presence mask");

  // Row t·N + n of `average` holds the mean over present faces of frame t.
  Tensor average({t_len * faces, t_len * faces}, 0.0);
  for (int64_t t = 0; t < t_len; ++t) {
    double count = 0.0;
    for (int64_t n = 0; n < faces; ++n) count += present[t * faces + n];
    if (count == 0.0) continue;
    for (int64_t n = 0; n < faces; ++n)
      for (int64_t j = 0; j < faces; ++j)
        average[(t * faces + n) * t_len * faces + t * faces + j] = present[t * faces + j] / count;
  }
  const Var context = ops::matmul(Var(std::move(average)), hidden);
  const Var parts[] = {hidden, context};
  const Var scores = score2_(ops::relu(score1_(ops::concat(parts, 1))));
  return ops::masked_softmax(ops::reshape(scores, {t_len, faces}), present);
}

FaceOutput FaceBranch::forward(const FaceBatch& batch) const {
  const int64_t g = config_.grid();
  if (batch.faces == 0) {
    return {Var(Tensor({batch.length, 0}, 0.0)), Var(Tensor({batch.length, 1, g, g}, 0.0))};
  }
  const Var hidden = streams(Var(batch.crops), batch.faces, batch.present);
  Var weights = fusion_weights(hidden, batch.present);
  Var map = ops::weighted_map_sum(weights, batch.kernels);
  return {std::move(weights), std::move(map)};
}

FaceWeightLoss face_weight_loss(const Var& pred, const Tensor& target, const std::vector<bool>& supervised,
                                const Tensor& present) {
  if (pred.shape() != target.shape() || pred.shape() != present.shape() || pred.value().rank() != 2 ||
      static_cast<int64_t>(supervised.size()) != pred.dim(0)) {
    throw ShapeError("face weight loss shapes disagree: pred " + shape_to_string(pred.shape()) + ", target " +
                     shape_to_string(target.shape()));
  }
  const int64_t faces = pred.dim(1);
  Tensor mask(pred.shape(), 0.0);
  double count = 0.0;
  for (int64_t t = 0; t < pred.dim(0); ++t) {
    if (!supervised[static_cast<size_t>(t)]) continue;
    for (int64_t n = 0; n < faces; ++n) {
      mask[t * faces + n] = present[t * faces + n];
      count += present[t * faces + n];
    }
  }
  if (count == 0.0) return {Var(Tensor({1}, 0.0)), true};
  const Var diff = ops::sub(pred, Var(target));
  return {ops::scale(ops::sum(ops::mul_const(ops::mul(diff, diff), mask)), 1.0 / count), false};
}

}  // namespace avsal
