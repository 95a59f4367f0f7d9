// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avsal/audio_branch.hpp"
#include "avsal/face_branch.hpp"
#include "avsal/fusion.hpp"
#include "avsal/visual_branch.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace avsal;
using avsal::testing::gradcheck;
using avsal::testing::random_like;

namespace {

ModelConfig mini(int64_t resolution, int64_t divisor) {
  ModelConfig c;
  c.resolution = resolution;
  c.width_divisor = divisor;
  return c;
}

bool same(const Tensor& a, const Tensor& b) { return a == b; }

bool all_equal(const Tensor& a, double v) {
  return std::all_of(a.values().begin(), a.values().end(), [v](double x) { return x == v; });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor frame_rows(const Tensor& x, int64_t first, int64_t count) {
  const int64_t one = x.numel() / x.dim(0);
  Shape s = x.shape();
  s[0] = count;
  return Tensor(s, std::vector<double>(x.data() + first * one, x.data() + (first + count) * one));
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  Shape s = a.shape();
  s[0] += b.dim(0);
  std::vector<double> v(a.values().begin(), a.values().end());
  v.insert(v.end(), b.values().begin(), b.values().end());
  return Tensor(s, std::move(v));
}

Var project(const Var& y, uint64_t seed) { return ops::sum(ops::mul_const(y, random_like(y.shape(), seed))); }

}  // namespace

// ---------------------------------------------------------------- visual

TEST_CASE("visual branch shapes and contracts") {
  const ModelConfig cfg = mini(32, 16);
  ParameterStore store;
  Rng rng(1);
  VisualBranch vb(store, cfg, rng);
  const Tensor clip = random_like({4, 3, 32, 32}, 3, -0.5, 0.5);

  SUBCASE("shapes") {
    for (int64_t t : {1, 4}) {
      const Var x(frame_rows(clip, 0, t));
      CHECK(vb.rgb(x).shape() == Shape{t, 32, 4, 4});
      CHECK(vb.flow(x).shape() == Shape{t, 16, 4, 4});
      CHECK(vb.forward(x).shape() == Shape{t, 16, 4, 4});
    }
    CHECK_THROWS_AS(vb.forward(Var(Tensor({2, 3, 16, 16}))), ShapeError);
    CHECK_THROWS_AS(vb.rgb(Var(Tensor({2, 1, 32, 32}))), ShapeError);
  }
  SUBCASE("identical frames give identical appearance features") {
    Tensor twin = clip;
    std::copy_n(clip.data(), 3 * 32 * 32, twin.data() + 3 * 32 * 32);
    const Tensor f = vb.rgb(Var(twin)).value();
    CHECK(same(frame_rows(f, 0, 1), frame_rows(f, 1, 1)));
  }
  SUBCASE("zero input with zero biases gives zero output") {
    const Var zero(Tensor({3, 3, 32, 32}, 0.0));
    CHECK(all_equal(vb.forward(zero).value(), 0.0));
    CHECK(all_equal(vb.rgb(zero).value(), 0.0));
    CHECK(all_equal(vb.flow(zero).value(), 0.0));
  }
  SUBCASE("static clip: every motion step equals step 1") {
    Tensor still({5, 3, 32, 32});
    for (int64_t t = 0; t < 5; ++t) std::copy_n(clip.data(), 3 * 32 * 32, still.data() + t * 3 * 32 * 32);
    const Tensor f = vb.flow(Var(still)).value();
    for (int64_t t = 0; t < 5; ++t) CHECK(same(frame_rows(f, t, 1), frame_rows(f, 1, 1)));
  }
  SUBCASE("first motion step sees a duplicated frame pair") {
    const Tensor f = vb.flow(Var(clip)).value();
    Tensor doubled = concat_rows(frame_rows(clip, 0, 1), frame_rows(clip, 0, 1));
    const Tensor g = vb.flow(Var(doubled)).value();
    CHECK(same(frame_rows(f, 0, 1), frame_rows(g, 1, 1)));
    CHECK_FALSE(same(frame_rows(f, 1, 1), frame_rows(f, 0, 1)));
  }
  SUBCASE("same seed, same output; reversed clip differs") {
    ParameterStore other_store;
    Rng other_rng(1);
    VisualBranch twin(other_store, cfg, other_rng);
    const Tensor a = vb.forward(Var(clip)).value();
    CHECK(same(a, twin.forward(Var(clip)).value()));
    Tensor reversed(clip.shape());
    for (int64_t t = 0; t < 4; ++t)
      std::copy_n(clip.data() + (3 - t) * 3 * 32 * 32, 3 * 32 * 32, reversed.data() + t * 3 * 32 * 32);
    const Tensor b = vb.forward(Var(reversed)).value();
    CHECK(max_abs_diff(frame_rows(a, 3, 1), frame_rows(b, 0, 1)) > 1e-9);
  }
  SUBCASE("state resets per call and carries within a clip") {
    const Tensor a = frame_rows(clip, 0, 2), b = frame_rows(clip, 2, 2);
    const Tensor alone = vb.forward(Var(b)).value();
    CHECK(same(alone, vb.forward(Var(b)).value()));
    const Tensor joined = vb.forward(Var(concat_rows(a, b))).value();
    CHECK(same(frame_rows(joined, 0, 2), vb.forward(Var(a)).value()));
    CHECK(max_abs_diff(frame_rows(joined, 2, 2), alone) > 1e-9);
  }
}

TEST_CASE("visual branch gradient check at 16x16") {
  const ModelConfig cfg = mini(16, 32);
  ParameterStore store;
  Rng rng(2);
  VisualBranch vb(store, cfg, rng);
  for (const auto& [name, p] : store.entries()) {
    if (name.ends_with(".bias")) const_cast<Var&>(p).mutable_value() = random_like(p.shape(), 17, -0.1, 0.1);
  }
  const Var frames(random_like({2, 3, 16, 16}, 5, -0.5, 0.5));
  auto loss = [&] { return project(vb.forward(frames), 77); };
  const auto r = gradcheck(loss, store.entries(), 1e-5, 6);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

// ---------------------------------------------------------------- audio

TEST_CASE("stack_spectrograms") {
  Tensor w({20, 2, 2});
  for (int64_t t = 0; t < 20; ++t)
    for (int64_t i = 0; i < 4; ++i) w[t * 4 + i] = static_cast<double>(t);
  auto frame_of = [](const Tensor& s, int64_t k) { return s[k * 4]; };

  const Tensor s0 = stack_spectrograms(w, 0, 16);
  CHECK(s0.shape() == Shape{16, 2, 2});
  for (int64_t k = 0; k < 16; ++k) CHECK(frame_of(s0, k) == 0.0);
  const Tensor s15 = stack_spectrograms(w, 15, 16);
  for (int64_t k = 0; k < 16; ++k) CHECK(frame_of(s15, k) == static_cast<double>(k));
  const Tensor s5 = stack_spectrograms(frame_rows(w, 0, 12), 5, 16);
  for (int64_t k = 0; k < 11; ++k) CHECK(frame_of(s5, k) == 0.0);
  for (int64_t k = 11; k < 16; ++k) CHECK(frame_of(s5, k) == static_cast<double>(k - 10));

  const Tensor all = stack_all_spectrograms(frame_rows(w, 0, 12), 16);
  CHECK(all.shape() == Shape{12, 1, 16, 2, 2});
  CHECK(same(frame_rows(all, 5, 1).reshaped({16, 2, 2}), s5));
}

TEST_CASE("audio branch") {
  const ModelConfig cfg = mini(64, 8);
  ParameterStore store;
  Rng rng(3);
  AudioBranch ab(store, cfg, rng);
  SUBCASE("shapes") {
    const Var x(random_like({3, 1, 16, 64, 64}, 1, 0.0, 1.0));
    CHECK(ab.forward(x).shape() == Shape{3, 8, 8, 8});
    CHECK_THROWS_AS(ab.forward(Var(Tensor({1, 1, 8, 64, 64}))), ShapeError);
  }
  SUBCASE("zero in, zero out") {
    CHECK(all_equal(ab.forward(Var(Tensor({1, 1, 16, 64, 64}, 0.0))).value(), 0.0));
  }
  SUBCASE("different stacks differ, equal stacks agree") {
    const Tensor a = random_like({1, 1, 16, 64, 64}, 4, 0.0, 1.0), b = random_like({1, 1, 16, 64, 64}, 5, 0.0, 1.0);
    CHECK(max_abs_diff(ab.forward(Var(a)).value(), ab.forward(Var(b)).value()) > 1e-9);
    CHECK(same(ab.forward(Var(a)).value(), ab.forward(Var(a)).value()));
  }
  SUBCASE("stack depth bounds") {
    ModelConfig deep = cfg;
    deep.audio_stack = 32;
    ParameterStore s2;
    CHECK_THROWS_AS(AudioBranch(s2, deep, rng), ShapeError);
  }
}

TEST_CASE("audio branch gradient check on a 4-image 32x32 stack") {
  ModelConfig cfg = mini(32, 4);
  cfg.audio_stack = 4;
  ParameterStore store;
  Rng rng(4);
  AudioBranch ab(store, cfg, rng);
  for (const auto& [name, p] : store.entries()) {
    if (name.ends_with(".bias")) const_cast<Var&>(p).mutable_value() = random_like(p.shape(), 23, -0.1, 0.1);
  }
  const Var x(random_like({2, 1, 4, 32, 32}, 8, 0.0, 1.0));
  CHECK(ab.forward(x).shape() == Shape{2, 16, 4, 4});
  auto loss = [&] { return project(ab.forward(x), 78); };
  const auto r = gradcheck(loss, store.entries(), 1e-5, 12);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

// ---------------------------------------------------------------- face

TEST_CASE("gaussian kernels and face-map composition") {
  const GaussianKernelParams g = GaussianKernelParams::from_box({40, 20, 32, 16});
  CHECK(g.mu.x == 56.0);
  CHECK(g.mu.y == 28.0);
  CHECK(g.sigma_x == 16.0);
  CHECK(g.sigma_y == 8.0);

  SUBCASE("single face with weight 1 reproduces its kernel") {
    const double w1[] = {1.0};
    const Tensor map = compose_face_map(w1, std::span(&g, 1), 64, 96);
    for (int64_t r = 0; r < 64; ++r)
      for (int64_t c = 0; c < 96; ++c) {
        const double dx = (c + 0.5 - 56.0) / 16.0, dy = (r + 0.5 - 28.0) / 8.0;
        CHECK(std::abs(map.at({r, c}) - std::exp(-0.5 * (dx * dx + dy * dy))) <= 1e-12);
      }
  }
  SUBCASE("two distant faces at half weight peak at one half") {
    const GaussianKernelParams a = GaussianKernelParams::from_box({10, 10, 5, 5});
    const GaussianKernelParams b = GaussianKernelParams::from_box({200, 200, 5, 5});
    const GaussianKernelParams ks[] = {a, b};
    const double w[] = {0.5, 0.5};
    const Tensor map = compose_face_map(w, ks, 256, 256);
    CHECK(std::abs(map.at({12, 12}) - 0.5) < 1e-6);
    CHECK(std::abs(map.at({202, 202}) - 0.5) < 1e-6);
    const double w2[] = {0.3, 0.7};
    const Tensor m2 = compose_face_map(w2, ks, 256, 256);
    CHECK(std::abs(m2.at({12, 12}) - 0.3) < 1e-6);
    CHECK(std::abs(m2.at({202, 202}) - 0.7) < 1e-6);
  }
  SUBCASE("linear in the weights") {
    const GaussianKernelParams ks[] = {g, GaussianKernelParams::from_box({5, 30, 20, 20}),
                                       GaussianKernelParams::from_box({60, 2, 8, 30})};
    const double u[] = {0.2, 0.5, 0.3}, v[] = {0.6, 0.1, 0.3};
    for (double alpha : {0.0, 0.25, 0.9}) {
      double mix[3];
      for (int i = 0; i < 3; ++i) mix[i] = alpha * u[i] + (1 - alpha) * v[i];
      const Tensor lhs = compose_face_map(mix, ks, 48, 80);
      const Tensor mu = compose_face_map(u, ks, 48, 80), mv = compose_face_map(v, ks, 48, 80);
      for (int64_t i = 0; i < lhs.numel(); ++i) CHECK(std::abs(lhs[i] - (alpha * mu[i] + (1 - alpha) * mv[i])) <= 1e-10);
    }
  }
}

TEST_CASE("face streams and weights") {
  const ModelConfig cfg = mini(64, 16);  // 32x32 crops
  ParameterStore store;
  Rng rng(5);
  FaceBranch fb(store, cfg, rng);
  const int64_t t_len = 4, h = fb.hidden_size();
  const Tensor crop_a = random_like({t_len, 3, 32, 32}, 11, -0.5, 0.5);
  const Tensor crop_b = random_like({t_len, 3, 32, 32}, 12, -0.5, 0.5);

  SUBCASE("single stream shape and determinism") {
    const Tensor hid = fb.stream(Var(crop_a)).value();
    CHECK(hid.shape() == Shape{t_len, h});
    CHECK(same(hid, fb.stream(Var(crop_a)).value()));
    CHECK_THROWS_AS(fb.stream(Var(Tensor({2, 3, 16, 16}))), ShapeError);
  }
  SUBCASE("identical inputs give identical hiddens across streams") {
    const Tensor hid = fb.streams(Var(concat_rows(crop_a, crop_a)), 2, Tensor({t_len, 2}, 1.0)).value();
    for (int64_t t = 0; t < t_len; ++t) CHECK(same(frame_rows(hid, 2 * t, 1), frame_rows(hid, 2 * t + 1, 1)));
    const Tensor single = fb.stream(Var(crop_a)).value();
    // Batched and single-stream GEMMs may round differently.
    for (int64_t t = 0; t < t_len; ++t) CHECK(max_abs_diff(frame_rows(hid, 2 * t, 1), frame_rows(single, t, 1)) < 1e-12);
  }
  SUBCASE("a face appearing mid-clip starts from a fresh state") {
    Tensor present({t_len, 2}, 1.0);
    present.at({0, 1}) = 0.0;
    present.at({1, 1}) = 0.0;
    Tensor late = crop_b;
    std::fill_n(late.data(), 2 * 3 * 32 * 32, 0.0);
    const Tensor hid = fb.streams(Var(concat_rows(crop_a, late)), 2, present).value();
    const Tensor fresh = fb.stream(Var(frame_rows(crop_b, 2, 2))).value();
    CHECK(max_abs_diff(frame_rows(hid, 2 * 2 + 1, 1), frame_rows(fresh, 0, 1)) < 1e-12);
    CHECK(max_abs_diff(frame_rows(hid, 2 * 3 + 1, 1), frame_rows(fresh, 1, 1)) < 1e-12);
    for (int64_t i = 0; i < h; ++i) CHECK(hid.at({1, i}) == 0.0);
  }
  SUBCASE("weight examples") {
    const Tensor one = fb.fusion_weights(fb.stream(Var(crop_a)), Tensor({t_len, 1}, 1.0)).value();
    CHECK(all_equal(one, 1.0));

    const Tensor twins = fb.fusion_weights(fb.streams(Var(concat_rows(crop_a, crop_a)), 2, Tensor({t_len, 2}, 1.0)),
                                           Tensor({t_len, 2}, 1.0))
                             .value();
    for (double v : twins.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("permuting faces permutes weights") {
    const Tensor crop_c = random_like({t_len, 3, 32, 32}, 13, -0.5, 0.5);
    Tensor present({t_len, 3}, 1.0);
    present.at({2, 1}) = 0.0;
    const Tensor abc = concat_rows(concat_rows(crop_a, crop_b), crop_c);
    const Tensor cab = concat_rows(concat_rows(crop_c, crop_a), crop_b);
    Tensor present_cab({t_len, 3});
    for (int64_t t = 0; t < t_len; ++t) {
      present_cab.at({t, 0}) = present.at({t, 2});
      present_cab.at({t, 1}) = present.at({t, 0});
      present_cab.at({t, 2}) = present.at({t, 1});
    }
    const Tensor w1 = fb.fusion_weights(fb.streams(Var(abc), 3, present), present).value();
    const Tensor w2 = fb.fusion_weights(fb.streams(Var(cab), 3, present_cab), present_cab).value();
    for (int64_t t = 0; t < t_len; ++t) {
      CHECK(w1.at({t, 0}) == doctest::Approx(w2.at({t, 1})).epsilon(1e-12));
      CHECK(w1.at({t, 1}) == doctest::Approx(w2.at({t, 2})).epsilon(1e-12));
      CHECK(w1.at({t, 2}) == doctest::Approx(w2.at({t, 0})).epsilon(1e-12));
      CHECK(w1.at({t, 0}) + w1.at({t, 1}) + w1.at({t, 2}) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(w1.at({2, 1}) == 0.0);
  }
  SUBCASE("no faces gives empty weights and a zero map") {
    FaceBatch none;
    none.length = 3;
    const FaceOutput out = fb.forward(none);
    CHECK(out.weights.shape() == Shape{3, 0});
    CHECK(out.face_map.shape() == Shape{3, 1, 8, 8});
    CHECK(all_equal(out.face_map.value(), 0.0));
  }
}

TEST_CASE("face_weight_loss examples") {
  const Tensor present({1, 2}, 1.0);
  auto loss = [&](std::vector<double> p, std::vector<double> g) {
    return face_weight_loss(Var(Tensor({1, 2}, std::move(p))), Tensor({1, 2}, std::move(g)), {true}, present);
  };
  CHECK(loss({0.3, 0.7}, {0.3, 0.7}).loss.value()[0] == 0.0);
  CHECK(loss({1.0, 0.0}, {0.0, 1.0}).loss.value()[0] == 1.0);
  CHECK(loss({0.5, 0.5}, {0.25, 0.75}).loss.value()[0] == doctest::Approx(0.0625).epsilon(1e-15));

  const FaceWeightLoss none =
      face_weight_loss(Var(Tensor({1, 2}, 0.5)), Tensor({1, 2}, 0.5), {false}, present);
  CHECK(none.unsupervised);
  CHECK(none.loss.value()[0] == 0.0);
  CHECK_THROWS_AS(face_weight_loss(Var(Tensor({1, 2})), Tensor({2, 2}), {true}, present), ShapeError);
}

// ---------------------------------------------------------------- fusion

TEST_CASE("fusion module") {
  const ModelConfig cfg = mini(32, 16);  // grid 4, context 8, modality maps 4
  ParameterStore store;
  Rng rng(6);
  const FusionWidths widths{16, 4, 1};
  Fusion fu(store, cfg, widths, rng);
  const Var fv(random_like({2, 16, 4, 4}, 1)), fa(random_like({2, 4, 4, 4}, 2)), ff(random_like({2, 1, 4, 4}, 3, 0, 1));
  const Var za(Tensor({2, 4, 4, 4}, 0.0)), zf(Tensor({2, 1, 4, 4}, 0.0));

  SUBCASE("shared context") {
    const Var h = fu.shared_context(fv, fa, ff);
    CHECK(h.shape() == Shape{2, 8, 4, 4});
    const Tensor only_v = fu.shared_context(fv, za, zf).value();
    const Tensor direct = ops::conv2d(fv, store.get("fusion.theta1_visual.weight"), Var(), 1, 0).value();
    CHECK(max_abs_diff(only_v, direct) < 1e-14);
    CHECK(max_abs_diff(fu.shared_context(Var(Tensor({2, 16, 4, 4}, 0.0)), za, zf).value(), only_v) > 1e-6);
    CHECK_THROWS_AS(fu.shared_context(fv, Var(Tensor({2, 4, 8, 8})), ff), ShapeError);
  }
  SUBCASE("modality maps depend on the context and their own modality") {
    const Var h = fu.shared_context(fv, fa, ff);
    const auto m = fu.modality_maps(h, fv, fa, ff);
    for (const Var& x : m) CHECK(x.shape() == Shape{2, 4, 4, 4});

    const Var fa2(random_like({2, 4, 4, 4}, 9));
    const Var h2 = fu.shared_context(fv, fa2, ff);
    const auto m2 = fu.modality_maps(h2, fv, fa2, ff);
    for (size_t i = 0; i < 3; ++i) CHECK(max_abs_diff(m[i].value(), m2[i].value()) > 1e-9);
    // With h held fixed, only the audio map moves.
    const auto m3 = fu.modality_maps(h, fv, fa2, ff);
    CHECK(same(m3[0].value(), m[0].value()));
    CHECK(same(m3[2].value(), m[2].value()));
    CHECK_FALSE(same(m3[1].value(), m[1].value()));

    Var w = store.get("fusion.theta2_visual.weight");
    const Tensor saved = w.value();
    w.mutable_value() = random_like(saved.shape(), 31);
    const auto m4 = fu.modality_maps(h, fv, fa, ff);
    w.mutable_value() = saved;
    CHECK_FALSE(same(m4[0].value(), m[0].value()));
    CHECK(same(m4[1].value(), m[1].value()));
    CHECK(same(m4[2].value(), m[2].value()));
  }
  SUBCASE("zero context and features give zero maps") {
    const Var zh(Tensor({2, 8, 4, 4}, 0.0));
    for (const Var& x : fu.modality_maps(zh, Var(Tensor({2, 16, 4, 4}, 0.0)), za, zf)) CHECK(all_equal(x.value(), 0.0));
  }
  SUBCASE("readout is a distribution per frame") {
    const Tensor s = fu.forward(fv, fa, ff).value();
    CHECK(s.shape() == Shape{2, 1, 32, 32});
    for (int64_t t = 0; t < 2; ++t) {
      double total = 0.0;
      for (int64_t i = 0; i < 32 * 32; ++i) {
        CHECK(s[t * 1024 + i] > 0.0);
        total += s[t * 1024 + i];
      }
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
  SUBCASE("constant logits give a uniform map; shifting logits changes nothing") {
    const auto m = fu.modality_maps(fu.shared_context(fv, fa, ff), fv, fa, ff);
    CHECK_FALSE(store.contains("fusion.readout.bias"));
    const Var logits = fu.readout_logits(m);
    const Tensor before = ops::spatial_softmax(ops::upsample_bilinear(logits, 8)).value();
    CHECK(max_abs_diff(before, fu.readout(m).value()) == 0.0);
    Tensor moved = logits.value();
    for (int64_t i = 0; i < moved.numel(); ++i) moved[i] += 3.7;
    const Tensor shifted = ops::spatial_softmax(ops::upsample_bilinear(Var(moved), 8)).value();
    CHECK(max_abs_diff(before, shifted) <= 1e-12);
    Var w = store.get("fusion.readout.weight");
    const Tensor saved_w = w.value();
    w.mutable_value().fill(0.0);
    const Tensor flat = fu.readout(m).value();
    for (double v : flat.values()) CHECK(v == doctest::Approx(1.0 / 1024).epsilon(1e-12));
    w.mutable_value() = saved_w;
  }
}

TEST_CASE("fusion gradient check on 8x8 grids with 4 channels") {
  const ModelConfig cfg = mini(64, 32);  // grid 8; context 4 channels, modality maps 2
  ParameterStore store;
  Rng rng(7);
  Fusion fu(store, cfg, FusionWidths{4, 4, 1}, rng);
  for (const auto& [name, p] : store.entries()) {
    if (name.ends_with(".bias")) const_cast<Var&>(p).mutable_value() = random_like(p.shape(), 29, -0.1, 0.1);
  }
  const Var fv(random_like({2, 4, 8, 8}, 41), true), fa(random_like({2, 4, 8, 8}, 42), true),
      ff(random_like({2, 1, 8, 8}, 43, 0, 1), true);
  auto loss = [&] { return project(ops::scale(fu.forward(fv, fa, ff), 4096.0), 45); };
  std::vector<std::pair<std::string, Var>> params(store.entries().begin(), store.entries().end());
  params.emplace_back("input.visual", fv);
  params.emplace_back("input.audio", fa);
  params.emplace_back("input.face", ff);
  const auto r = gradcheck(loss, params, 1e-5, 24);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}
