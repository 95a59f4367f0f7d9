// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "avsal/ops.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace avsal;
using avsal::testing::gradcheck;
using avsal::testing::random_like;

namespace {

Var param(const Shape& s, uint64_t seed) { return Var(random_like(s, seed), true); }

// sum(y ⊙ R) for a fixed random R.
Var project(const Var& y, uint64_t seed = 99) { return ops::sum(ops::mul_const(y, random_like(y.shape(), seed))); }

// Direct-loop 2-D convolution oracle.
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t o = w.dim(0), k = w.dim(2);
  const int64_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y({n, o, oh, ow});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t f = 0; f < o; ++f)
      for (int64_t r = 0; r < oh; ++r)
        for (int64_t q = 0; q < ow; ++q) {
          double s = b.empty() ? 0.0 : b[f];
          for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t a = 0; a < k; ++a)
              for (int64_t e = 0; e < k; ++e) {
                const int64_t yy = r * stride - pad + a, xx = q * stride - pad + e;
                if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                s += x.at({i, ch, yy, xx}) * w.at({f, ch, a, e});
              }
          y.at({i, f, r, q}) = s;
        }
  return y;
}

// Transposed convolution as scatter of each input pixel through the kernel.
Tensor naive_conv_transpose2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t co = w.dim(1), k = w.dim(2);
  const int64_t oh = (h - 1) * stride - 2 * pad + k, ow = (wd - 1) * stride - 2 * pad + k;
  Tensor y({n, co, oh, ow}, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < ci; ++c)
      for (int64_t r = 0; r < h; ++r)
        for (int64_t q = 0; q < wd; ++q)
          for (int64_t f = 0; f < co; ++f)
            for (int64_t a = 0; a < k; ++a)
              for (int64_t e = 0; e < k; ++e) {
                const int64_t yy = r * stride - pad + a, xx = q * stride - pad + e;
                if (yy < 0 || yy >= oh || xx < 0 || xx >= ow) continue;
                y.at({i, f, yy, xx}) += x.at({i, c, r, q}) * w.at({c, f, a, e});
              }
  return y;
}

void check_close(const Tensor& a, const Tensor& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == doctest::Approx(b[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("conv2d matches direct loops and finite differences") {
  for (auto [stride, pad, k] : {std::tuple{1, 1, 3}, {2, 3, 7}, {2, 2, 5}, {1, 0, 1}}) {
    Var x = param({2, 3, 9, 8}, 1);
    Var w = param({4, 3, k, k}, 2);
    Var b = param({4}, 3);
    check_close(ops::conv2d(x, w, b, stride, pad).value(), naive_conv2d(x.value(), w.value(), b.value(), stride, pad),
                1e-12);
    auto r = gradcheck([&] { return project(ops::conv2d(x, w, b, stride, pad)); }, {{"x", x}, {"w", w}, {"b", b}});
    CHECK_MESSAGE(r.max_rel_error < 1e-5, r.worst);
  }
}

TEST_CASE("conv_transpose2d matches scatter oracle and finite differences") {
  Var x = param({2, 3, 4, 5}, 4);
  Var w = param({3, 2, 4, 4}, 5);
  Var b = param({2}, 6);
  Tensor expect = naive_conv_transpose2d(x.value(), w.value(), 2, 1);
  Tensor got = ops::conv_transpose2d(x, w, Var(), 2, 1).value();
  check_close(got, expect, 1e-12);
  CHECK(got.shape() == Shape{2, 2, 8, 10});
  auto r = gradcheck([&] { return project(ops::conv_transpose2d(x, w, b, 2, 1)); }, {{"x", x}, {"w", w}, {"b", b}});
  CHECK_MESSAGE(r.max_rel_error < 1e-5, r.worst);
}

TEST_CASE("conv3d with depth 1 equals conv2d; gradients check") {
  Var x2 = param({2, 3, 6, 6}, 7);
  Var w2 = param({2, 3, 3, 3}, 8);
  Var x3(x2.value().reshaped({2, 3, 1, 6, 6}));
  Var w3(w2.value().reshaped({2, 3, 1, 3, 3}));
  Tensor a = ops::conv2d(x2, w2, Var(), 2, 1).value();
  Tensor c = ops::conv3d(x3, w3, Var(), {1, 2, 2}, {0, 1, 1}).value();
  check_close(c.reshaped(a.shape()), a, 1e-12);

  Var x = param({1, 2, 5, 6, 6}, 9);
  Var w = param({3, 2, 3, 3, 3}, 10);
  Var b = param({3}, 11);
  auto y = ops::conv3d(x, w, b, {2, 2, 2}, {1, 1, 1});
  CHECK(y.shape() == Shape{1, 3, 3, 3, 3});
  auto r = gradcheck([&] { return project(ops::conv3d(x, w, b, {2, 2, 1}, {1, 1, 1})); }, {{"x", x}, {"w", w}, {"b", b}});
  CHECK_MESSAGE(r.max_rel_error < 1e-5, r.worst);
}

TEST_CASE("pooling, upsampling and pointwise ops differentiate correctly") {
  Var x = param({2, 3, 6, 6}, 12);
  auto check = [&](const char* name, auto fn) {
    auto r = gradcheck([&] { return project(fn(x)); }, {{"x", x}});
    CHECK_MESSAGE(r.max_rel_error < 1e-5, name, " ", r.worst);
  };
  check("max_pool", [](const Var& v) { return ops::max_pool2d(v, 2); });
  check("avg_pool", [](const Var& v) { return ops::avg_pool2d(v, 3); });
  check("gap", [](const Var& v) { return ops::global_avg_pool(v); });
  check("upsample", [](const Var& v) { return ops::upsample_bilinear(v, 4); });
  check("sigmoid", [](const Var& v) { return ops::sigmoid(v); });
  check("tanh", [](const Var& v) { return ops::tanh(v); });
  check("softmax", [](const Var& v) { return ops::spatial_softmax(v); });
  check("mul", [](const Var& v) { return ops::mul(v, ops::tanh(v)); });
  check("slice", [](const Var& v) { return ops::slice(v, 1, 1, 3); });
  check("concat", [](const Var& v) {
    const Var parts[] = {v, ops::scale(v, 2.0), ops::slice(v, 1, 0, 1)};
    return ops::concat(parts, 1);
  });
  check("index_select", [](const Var& v) {
    const int64_t rows[] = {1, 0, 1};
    return ops::index_select(v, rows);
  });
  check("scale_rows", [](const Var& v) {
    const double f[] = {0.5, -2.0};
    return ops::scale_rows(v, f);
  });
}

TEST_CASE("bilinear upsample of a constant is constant and interpolates linearly") {
  Tensor ramp({1, 1, 1, 4}, std::vector<double>{0, 1, 2, 3});
  auto y = ops::upsample_bilinear(Var(ramp), 2).value();
  // half-pixel centers: outputs at source coords -0.25(clamped 0),0.25,0.75,...
  const double expect[] = {0.0, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3.0};
  for (int i = 0; i < 8; ++i) CHECK(y.at({0, 0, 0, i}) == doctest::Approx(expect[i]));
  auto c = ops::upsample_bilinear(Var(Tensor({1, 2, 3, 3}, 0.7)), 8).value();
  for (double v : c.values()) CHECK(v == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("linear and matmul") {
  Var x = param({3, 4}, 13), w = param({5, 4}, 14), b = param({5}, 15), m = param({4, 2}, 16);
  auto r = gradcheck([&] { return project(ops::linear(x, w, b)); }, {{"x", x}, {"w", w}, {"b", b}});
  CHECK_MESSAGE(r.max_rel_error < 1e-5, r.worst);
  r = gradcheck([&] { return project(ops::matmul(x, m)); }, {{"x", x}, {"m", m}});
  CHECK_MESSAGE(r.max_rel_error < 1e-5, r.worst);
  CHECK_THROWS_AS(ops::matmul(x, x), ShapeError);
}

TEST_CASE("masked softmax ignores masked entries and sums to one") {
  Var s = param({3, 4}, 17);
  Tensor mask({3, 4}, std::vector<double>{1, 0, 1, 1, 0, 0, 0, 0, 0, 1, 0, 0});
  auto y = ops::masked_softmax(s, mask).value();
  CHECK(y.at({0, 1}) == 0.0);
  CHECK(y.at({0, 0}) + y.at({0, 2}) + y.at({0, 3}) == doctest::Approx(1.0));
  for (int c = 0; c < 4; ++c) CHECK(y.at({1, c}) == 0.0);
  CHECK(y.at({2, 1}) == 1.0);
  auto r = gradcheck([&] { return project(ops::masked_softmax(s, mask)); }, {{"s", s}});
  CHECK_MESSAGE(r.max_rel_error < 1e-5, r.worst);
}

TEST_CASE("weighted map sum is linear in weights") {
  Var w = param({2, 3}, 18);
  Tensor k = random_like({2, 3, 4, 4}, 19, 0.0, 1.0);
  auto r = gradcheck([&] { return project(ops::weighted_map_sum(w, k)); }, {{"w", w}});
  CHECK_MESSAGE(r.max_rel_error < 1e-5, r.worst);
}

TEST_CASE("no-grad guard produces constants") {
  Var x = param({2, 2}, 20);
  NoGradGuard guard;
  CHECK_FALSE(ops::relu(x).requires_grad());
}
