// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <limits>
#include <numeric>

namespace avsal::ops {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                                      " vs " + shape_to_string(b.shape()));
}

bool wants_grad(const Node& self, size_t i) { return self.inputs.size() > i && self.inputs[i]->requires_grad; }

template <typename Fwd, typename Bwd>
Var unary(const Var& x, Fwd fwd, Bwd dydx_from_y) {
  Tensor y(x.shape());
  const double* xs = x.value().data();
  double* ys = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) ys[i] = fwd(xs[i]);
  return make_op_result(std::move(y), {x}, [dydx_from_y](Node& self) {
    Tensor& gx = self.inputs[0]->grad_buffer();
    const double* gy = self.grad.data();
    const double* yv = self.value.data();
    const double* xv = self.inputs[0]->value.data();
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += gy[i] * dydx_from_y(xv[i], yv[i]);
  });
}

// ---------------------------------------------------------------------------
// Convolution engine. All convolutions are lowered to GEMM over an im2col
// buffer whose columns hold several samples side by side.

struct ConvGeom {
  int64_t channels, depth, height, width;  // image side
  int kd, kh, kw;
  int sd, sh, sw;
  int pd, ph, pw;
  int64_t out_d, out_h, out_w;  // grid side

  int64_t rows() const { return channels * kd * kh * kw; }
  int64_t cols() const { return out_d * out_h * out_w; }
  int64_t image_size() const { return channels * depth * height * width; }
};

// Valid output index range [lo, hi) along one axis for kernel offset e.
std::pair<int64_t, int64_t> valid_range(int64_t out, int stride, int pad, int e, int64_t in) {
  // need 0 <= o*stride - pad + e < in
  int64_t lo = 0;
  if (pad - e > 0) lo = (pad - e + stride - 1) / stride;
  int64_t hi = 0;
  if (in - 1 + pad - e >= 0) hi = (in - 1 + pad - e) / stride + 1;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
  return {lo, hi};
}

// Short padding runs are written inline; libc memset calls dominate otherwise.
__attribute__((optimize("no-tree-loop-distribute-patterns")))
void im2col(const double* img, const ConvGeom& g, double* col, int64_t ld, int64_t col_off) {
  const int64_t plane = g.out_h * g.out_w;
  for (int64_t c = 0; c < g.channels; ++c) {
    for (int a = 0; a < g.kd; ++a) {
      for (int b = 0; b < g.kh; ++b) {
        for (int e = 0; e < g.kw; ++e) {
          const int64_t row = ((c * g.kd + a) * g.kh + b) * g.kw + e;
          double* dst = col + row * ld + col_off;
          const auto [wlo, whi] = valid_range(g.out_w, g.sw, g.pw, e, g.width);
          for (int64_t od = 0; od < g.out_d; ++od) {
            const int64_t id = od * g.sd - g.pd + a;
            double* dplane = dst + od * plane;
            if (id < 0 || id >= g.depth) {
              std::fill(dplane, dplane + plane, 0.0);
              continue;
            }
            for (int64_t oh = 0; oh < g.out_h; ++oh) {
              const int64_t ih = oh * g.sh - g.ph + b;
              double* drow = dplane + oh * g.out_w;
              if (ih < 0 || ih >= g.height) {
                std::fill(drow, drow + g.out_w, 0.0);
                continue;
              }
              const double* src = img + ((c * g.depth + id) * g.height + ih) * g.width - g.pw + e;
              for (int64_t ow = 0; ow < wlo; ++ow) drow[ow] = 0.0;
              if (g.sw == 1) {
                std::memcpy(drow + wlo, src + wlo, static_cast<size_t>(whi - wlo) * sizeof(double));
              } else {
                for (int64_t ow = wlo; ow < whi; ++ow) drow[ow] = src[ow * g.sw];
              }
              for (int64_t ow = whi; ow < g.out_w; ++ow) drow[ow] = 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvGeom& g, int64_t ld, int64_t col_off, double* img) {
  const int64_t plane = g.out_h * g.out_w;
  for (int64_t c = 0; c < g.channels; ++c) {
    for (int a = 0; a < g.kd; ++a) {
      for (int b = 0; b < g.kh; ++b) {
        for (int e = 0; e < g.kw; ++e) {
          const int64_t row = ((c * g.kd + a) * g.kh + b) * g.kw + e;
          const double* srcc = col + row * ld + col_off;
          const auto [wlo, whi] = valid_range(g.out_w, g.sw, g.pw, e, g.width);
          for (int64_t od = 0; od < g.out_d; ++od) {
            const int64_t id = od * g.sd - g.pd + a;
            if (id < 0 || id >= g.depth) continue;
            for (int64_t oh = 0; oh < g.out_h; ++oh) {
              const int64_t ih = oh * g.sh - g.ph + b;
              if (ih < 0 || ih >= g.height) continue;
              const double* srow = srcc + od * plane + oh * g.out_w;
              double* dst = img + ((c * g.depth + id) * g.height + ih) * g.width;
              for (int64_t ow = wlo; ow < whi; ++ow) dst[ow * g.sw - g.pw + e] += srow[ow];
            }
          }
        }
      }
    }
  }
}

// Uninitialized scratch buffer.
std::unique_ptr<double[]> scratch(int64_t n) { return std::unique_ptr<double[]>(new double[static_cast<size_t>(n)]); }

// Samples per GEMM so that one im2col buffer stays below ~64 MB.
int64_t group_size(int64_t rows, int64_t cols, int64_t batch) {
  constexpr int64_t kBudget = int64_t{8} << 20;
  const int64_t per = std::max<int64_t>(1, rows * cols);
  return std::clamp<int64_t>(kBudget / per, 1, std::max<int64_t>(batch, 1));
}

// NC(P) block of samples [n0, n0+gs) <-> [C, gs*P] matrix.
void gather_cols(const double* x, int64_t n0, int64_t gs, int64_t channels, int64_t plane, double* out) {
  const int64_t ld = gs * plane;
  for (int64_t s = 0; s < gs; ++s) {
    const double* src = x + (n0 + s) * channels * plane;
    for (int64_t c = 0; c < channels; ++c) {
      std::copy_n(src + c * plane, plane, out + c * ld + s * plane);
    }
  }
}

void scatter_cols(const double* in, int64_t n0, int64_t gs, int64_t channels, int64_t plane, double* x,
                  bool accumulate) {
  const int64_t ld = gs * plane;
  for (int64_t s = 0; s < gs; ++s) {
    double* dst = x + (n0 + s) * channels * plane;
    for (int64_t c = 0; c < channels; ++c) {
      const double* src = in + c * ld + s * plane;
      double* d = dst + c * plane;
      if (accumulate) {
        for (int64_t p = 0; p < plane; ++p) d[p] += src[p];
      } else {
        std::copy_n(src, plane, d);
      }
    }
  }
}

void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, const double* a, int64_t lda, const double* b,
          int64_t ldb, double beta, double* c, int64_t ldc) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (beta == 0.0) {
      for (int64_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0);
    }
    return;
  }
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

// Forward/backward for a direct convolution x (N,C,D,H,W) -> y (N,O,Do,Ho,Wo).
Var conv_nd(const Var& x, const Var& w, const Var& b, const ConvGeom& g, int64_t batch, int64_t out_ch,
            Shape out_shape) {
  const int64_t K = g.rows();
  const int64_t P = g.cols();
  const int64_t per_group = group_size(K, P, batch);

  Tensor y(std::move(out_shape));
  {
    auto col = scratch(K * P * per_group);
    auto out = scratch(out_ch * P * per_group);
    const double* bias = b.defined() ? b.value().data() : nullptr;
    for (int64_t n0 = 0; n0 < batch; n0 += per_group) {
      const int64_t gs = std::min(per_group, batch - n0);
      const int64_t ld = gs * P;
      for (int64_t s = 0; s < gs; ++s) im2col(x.value().data() + (n0 + s) * g.image_size(), g, col.get(), ld, s * P);
      gemm(false, false, out_ch, ld, K, w.value().data(), K, col.get(), ld, 0.0, out.get(), ld);
      if (bias) {
        for (int64_t o = 0; o < out_ch; ++o) {
          double* row = out.get() + o * ld;
          for (int64_t p = 0; p < ld; ++p) row[p] += bias[o];
        }
      }
      scatter_cols(out.get(), n0, gs, out_ch, P, y.data(), false);
    }
  }

  std::vector<Var> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_op_result(std::move(y), std::move(inputs), [g, batch, out_ch, K, P, per_group](Node& self) {
    const Node& xn = *self.inputs[0];
    const Node& wn = *self.inputs[1];
    const bool need_x = wants_grad(self, 0);
    const bool need_w = wants_grad(self, 1);
    const bool need_b = wants_grad(self, 2);
    auto col = scratch(need_w ? K * P * per_group : 0);
    auto dout = scratch(out_ch * P * per_group);
    auto dcol = scratch(need_x ? K * P * per_group : 0);
    double* dx = need_x ? self.inputs[0]->grad_buffer().data() : nullptr;
    double* dw = need_w ? self.inputs[1]->grad_buffer().data() : nullptr;
    double* db = need_b ? self.inputs[2]->grad_buffer().data() : nullptr;
    for (int64_t n0 = 0; n0 < batch; n0 += per_group) {
      const int64_t gs = std::min(per_group, batch - n0);
      const int64_t ld = gs * P;
      gather_cols(self.grad.data(), n0, gs, out_ch, P, dout.get());
      if (db) {
        for (int64_t o = 0; o < out_ch; ++o) {
          const double* row = dout.get() + o * ld;
          db[o] += std::accumulate(row, row + ld, 0.0);
        }
      }
      if (dw) {
        for (int64_t s = 0; s < gs; ++s) im2col(xn.value.data() + (n0 + s) * g.image_size(), g, col.get(), ld, s * P);
        gemm(false, true, out_ch, K, ld, dout.get(), ld, col.get(), ld, 1.0, dw, K);
      }
      if (dx) {
        gemm(true, false, K, ld, out_ch, wn.value.data(), K, dout.get(), ld, 0.0, dcol.get(), ld);
        for (int64_t s = 0; s < gs; ++s) col2im(dcol.get(), g, ld, s * P, dx + (n0 + s) * g.image_size());
      }
    }
  });
}

int64_t conv_out(int64_t in, int k, int stride, int pad) {
  const int64_t span = in + 2 * pad - k;
  require(span >= 0 && stride > 0, "convolution kernel larger than padded input");
  return span / stride + 1;
}

void check_bias(const Var& b, int64_t channels) {
  if (b.defined()) {
    require(b.value().rank() == 1 && b.dim(0) == channels, "bias shape " + shape_to_string(b.shape()));
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] += b.value()[i];
  return make_op_result(std::move(y), {a, b}, [](Node& self) {
    for (size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self, k)) continue;
      Tensor& g = self.inputs[k]->grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] -= b.value()[i];
  return make_op_result(std::move(y), {a, b}, [](Node& self) {
    if (wants_grad(self, 0)) {
      Tensor& g = self.inputs[0]->grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self, 1)) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] *= b.value()[i];
  return make_op_result(std::move(y), {a, b}, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    if (wants_grad(self, 0)) {
      Tensor& g = self.inputs[0]->grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants_grad(self, 1)) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor y = a.value();
  for (double& v : y.values()) v *= factor;
  return make_op_result(std::move(y), {a}, [factor](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += factor * self.grad[i];
  });
}

Var mul_const(const Var& a, const Tensor& factor) {
  require(a.shape() == factor.shape(), "mul_const: shape mismatch");
  Tensor y = a.value();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] *= factor[i];
  return make_op_result(std::move(y), {a}, [factor](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += factor[i] * self.grad[i];
  });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double xv, double) { return xv > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sum(const Var& x) {
  Tensor y({1}, x.value().sum());
  return make_op_result(std::move(y), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (double& v : g.values()) v += self.grad[0];
  });
}

Var mean(const Var& x) {
  require(x.value().numel() > 0, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().numel()));
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return make_op_result(std::move(y), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

Var concat(std::span<const Var> parts, size_t axis) {
  require(!parts.empty(), "concat of nothing");
  const Shape& first = parts[0].shape();
  require(axis < first.size(), "concat axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    require(p.shape().size() == first.size(), "concat rank mismatch");
    for (size_t d = 0; d < first.size(); ++d) {
      require(d == axis || p.shape()[d] == first[d],
              "concat shape mismatch " + shape_to_string(p.shape()) + " vs " + shape_to_string(first));
    }
    out_shape[axis] += p.shape()[axis];
  }
  int64_t outer = 1, inner = 1;
  for (size_t d = 0; d < axis; ++d) outer *= first[d];
  for (size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const int64_t out_block = out_shape[axis] * inner;

  Tensor y(out_shape);
  std::vector<int64_t> offsets;
  int64_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const int64_t block = p.shape()[axis] * inner;
    for (int64_t o = 0; o < outer; ++o) {
      std::copy_n(p.value().data() + o * block, block, y.data() + o * out_block + off);
    }
    off += block;
  }
  return make_op_result(std::move(y), std::vector<Var>(parts.begin(), parts.end()),
                        [offsets, outer, out_block](Node& self) {
                          for (size_t k = 0; k < self.inputs.size(); ++k) {
                            if (!self.inputs[k]->requires_grad) continue;
                            Tensor& g = self.inputs[k]->grad_buffer();
                            const int64_t block = outer > 0 ? g.numel() / outer : 0;
                            for (int64_t o = 0; o < outer; ++o) {
                              const double* src = self.grad.data() + o * out_block + offsets[k];
                              double* dst = g.data() + o * block;
                              for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
                            }
                          }
                        });
}

Var slice(const Var& x, size_t axis, int64_t begin, int64_t end) {
  const Shape& in = x.shape();
  require(axis < in.size() && 0 <= begin && begin <= end && end <= in[axis],
          "slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " + shape_to_string(in));
  int64_t outer = 1, inner = 1;
  for (size_t d = 0; d < axis; ++d) outer *= in[d];
  for (size_t d = axis + 1; d < in.size(); ++d) inner *= in[d];
  Shape out_shape = in;
  out_shape[axis] = end - begin;
  const int64_t in_block = in[axis] * inner;
  const int64_t out_block = (end - begin) * inner;
  const int64_t start = begin * inner;
  Tensor y(out_shape);
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(x.value().data() + o * in_block + start, out_block, y.data() + o * out_block);
  }
  return make_op_result(std::move(y), {x}, [outer, in_block, out_block, start](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = self.grad.data() + o * out_block;
      double* dst = g.data() + o * in_block + start;
      for (int64_t i = 0; i < out_block; ++i) dst[i] += src[i];
    }
  });
}

Var index_select(const Var& x, std::span<const int64_t> rows) {
  require(x.value().rank() >= 1, "index_select on scalar");
  const int64_t n = x.dim(0);
  const int64_t row = n > 0 ? x.value().numel() / n : 0;
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<int64_t>(rows.size());
  Tensor y(out_shape);
  for (size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < n, "index_select row out of range");
    std::copy_n(x.value().data() + rows[i] * row, row, y.data() + static_cast<int64_t>(i) * row);
  }
  std::vector<int64_t> idx(rows.begin(), rows.end());
  return make_op_result(std::move(y), {x}, [idx, row](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (size_t i = 0; i < idx.size(); ++i) {
      const double* src = self.grad.data() + static_cast<int64_t>(i) * row;
      double* dst = g.data() + idx[i] * row;
      for (int64_t k = 0; k < row; ++k) dst[k] += src[k];
    }
  });
}

Var scale_rows(const Var& x, std::span<const double> factors) {
  require(x.value().rank() >= 1 && x.dim(0) == static_cast<int64_t>(factors.size()), "scale_rows: factor count");
  const int64_t row = factors.empty() ? 0 : x.value().numel() / x.dim(0);
  Tensor y = x.value();
  for (size_t i = 0; i < factors.size(); ++i) {
    double* r = y.data() + static_cast<int64_t>(i) * row;
    for (int64_t k = 0; k < row; ++k) r[k] *= factors[i];
  }
  std::vector<double> f(factors.begin(), factors.end());
  return make_op_result(std::move(y), {x}, [f, row](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (size_t i = 0; i < f.size(); ++i) {
      const int64_t base = static_cast<int64_t>(i) * row;
      for (int64_t k = 0; k < row; ++k) g[base + k] += f[i] * self.grad[base + k];
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2 && a.dim(1) == b.dim(0),
          "matmul shapes " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor y({m, n});
  gemm(false, false, m, n, k, a.value().data(), k, b.value().data(), n, 0.0, y.data(), n);
  return make_op_result(std::move(y), {a, b}, [m, k, n](Node& self) {
    if (wants_grad(self, 0)) {
      gemm(false, true, m, k, n, self.grad.data(), n, self.inputs[1]->value.data(), n, 1.0,
           self.inputs[0]->grad_buffer().data(), k);
    }
    if (wants_grad(self, 1)) {
      gemm(true, false, k, n, m, self.inputs[0]->value.data(), k, self.grad.data(), n, 1.0,
           self.inputs[1]->grad_buffer().data(), n);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require(x.value().rank() == 2 && w.value().rank() == 2 && x.dim(1) == w.dim(1),
          "linear shapes " + shape_to_string(x.shape()) + " with weight " + shape_to_string(w.shape()));
  const int64_t batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  check_bias(b, out);
  Tensor y({batch, out});
  gemm(false, true, batch, out, in, x.value().data(), in, w.value().data(), in, 0.0, y.data(), out);
  if (b.defined()) {
    for (int64_t i = 0; i < batch; ++i)
      for (int64_t o = 0; o < out; ++o) y[i * out + o] += b.value()[o];
  }
  std::vector<Var> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_op_result(std::move(y), std::move(inputs), [batch, in, out](Node& self) {
    if (wants_grad(self, 0)) {
      gemm(false, false, batch, in, out, self.grad.data(), out, self.inputs[1]->value.data(), in, 1.0,
           self.inputs[0]->grad_buffer().data(), in);
    }
    if (wants_grad(self, 1)) {
      gemm(true, false, out, in, batch, self.grad.data(), out, self.inputs[0]->value.data(), in, 1.0,
           self.inputs[1]->grad_buffer().data(), in);
    }
    if (wants_grad(self, 2)) {
      Tensor& gb = self.inputs[2]->grad_buffer();
      for (int64_t i = 0; i < batch; ++i)
        for (int64_t o = 0; o < out; ++o) gb[o] += self.grad[i * out + o];
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding) {
  require(x.value().rank() == 4 && w.value().rank() == 4 && x.dim(1) == w.dim(1) && w.dim(2) == w.dim(3),
          "conv2d shapes " + shape_to_string(x.shape()) + " with weight " + shape_to_string(w.shape()));
  check_bias(b, w.dim(0));
  const int k = static_cast<int>(w.dim(2));
  ConvGeom g{x.dim(1), 1, x.dim(2), x.dim(3), 1, k, k, 1, stride, stride, 0, padding, padding, 1, 0, 0};
  g.out_h = conv_out(g.height, k, stride, padding);
  g.out_w = conv_out(g.width, k, stride, padding);
  return conv_nd(x, w, b, g, x.dim(0), w.dim(0), {x.dim(0), w.dim(0), g.out_h, g.out_w});
}

Var conv3d(const Var& x, const Var& w, const Var& b, std::array<int, 3> stride, std::array<int, 3> padding) {
  require(x.value().rank() == 5 && w.value().rank() == 5 && x.dim(1) == w.dim(1),
          "conv3d shapes " + shape_to_string(x.shape()) + " with weight " + shape_to_string(w.shape()));
  check_bias(b, w.dim(0));
  ConvGeom g{x.dim(1),
             x.dim(2),
             x.dim(3),
             x.dim(4),
             static_cast<int>(w.dim(2)),
             static_cast<int>(w.dim(3)),
             static_cast<int>(w.dim(4)),
             stride[0],
             stride[1],
             stride[2],
             padding[0],
             padding[1],
             padding[2],
             0,
             0,
             0};
  g.out_d = conv_out(g.depth, g.kd, g.sd, g.pd);
  g.out_h = conv_out(g.height, g.kh, g.sh, g.ph);
  g.out_w = conv_out(g.width, g.kw, g.sw, g.pw);
  return conv_nd(x, w, b, g, x.dim(0), w.dim(0), {x.dim(0), w.dim(0), g.out_d, g.out_h, g.out_w});
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int padding) {
  require(x.value().rank() == 4 && w.value().rank() == 4 && x.dim(1) == w.dim(0) && w.dim(2) == w.dim(3),
          "conv_transpose2d shapes " + shape_to_string(x.shape()) + " with weight " + shape_to_string(w.shape()));
  const int64_t batch = x.dim(0), in_ch = x.dim(1), out_ch = w.dim(1);
  check_bias(b, out_ch);
  const int k = static_cast<int>(w.dim(2));
  const int64_t out_h = (x.dim(2) - 1) * stride - 2 * padding + k;
  const int64_t out_w = (x.dim(3) - 1) * stride - 2 * padding + k;
  require(out_h > 0 && out_w > 0, "conv_transpose2d produces empty output");
  // Geometry of the adjoint direct convolution: output image -> input grid.
  const ConvGeom g{out_ch, 1, out_h, out_w, 1, k, k, 1, stride, stride, 0, padding, padding, 1, x.dim(2), x.dim(3)};
  require(conv_out(out_h, k, stride, padding) == x.dim(2), "conv_transpose2d geometry");
  const int64_t K = g.rows();
  const int64_t P = g.cols();
  const int64_t per_group = group_size(K, P, batch);

  Tensor y({batch, out_ch, out_h, out_w});
  {
    auto xin = scratch(in_ch * P * per_group);
    auto col = scratch(K * P * per_group);
    for (int64_t n0 = 0; n0 < batch; n0 += per_group) {
      const int64_t gs = std::min(per_group, batch - n0);
      const int64_t ld = gs * P;
      gather_cols(x.value().data(), n0, gs, in_ch, P, xin.get());
      gemm(true, false, K, ld, in_ch, w.value().data(), K, xin.get(), ld, 0.0, col.get(), ld);
      for (int64_t s = 0; s < gs; ++s) col2im(col.get(), g, ld, s * P, y.data() + (n0 + s) * g.image_size());
    }
    if (b.defined()) {
      const int64_t plane = out_h * out_w;
      for (int64_t n = 0; n < batch; ++n)
        for (int64_t o = 0; o < out_ch; ++o) {
          double* p = y.data() + (n * out_ch + o) * plane;
          for (int64_t i = 0; i < plane; ++i) p[i] += b.value()[o];
        }
    }
  }
  std::vector<Var> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_op_result(std::move(y), std::move(inputs), [g, batch, in_ch, out_ch, K, P, per_group](Node& self) {
    const bool need_x = wants_grad(self, 0);
    const bool need_w = wants_grad(self, 1);
    const bool need_b = wants_grad(self, 2);
    const Node& xn = *self.inputs[0];
    const Node& wn = *self.inputs[1];
    auto col = scratch(K * P * per_group);
    auto xin = scratch(need_w ? in_ch * P * per_group : 0);
    auto dxin = scratch(need_x ? in_ch * P * per_group : 0);
    for (int64_t n0 = 0; n0 < batch; n0 += per_group) {
      const int64_t gs = std::min(per_group, batch - n0);
      const int64_t ld = gs * P;
      for (int64_t s = 0; s < gs; ++s) im2col(self.grad.data() + (n0 + s) * g.image_size(), g, col.get(), ld, s * P);
      if (need_x) {
        gemm(false, false, in_ch, ld, K, wn.value.data(), K, col.get(), ld, 0.0, dxin.get(), ld);
        scatter_cols(dxin.get(), n0, gs, in_ch, P, self.inputs[0]->grad_buffer().data(), true);
      }
      if (need_w) {
        gather_cols(xn.value.data(), n0, gs, in_ch, P, xin.get());
        gemm(false, true, in_ch, K, ld, xin.get(), ld, col.get(), ld, 1.0, self.inputs[1]->grad_buffer().data(), K);
      }
    }
    if (need_b) {
      Tensor& gb = self.inputs[2]->grad_buffer();
      const int64_t plane = g.height * g.width;
      for (int64_t n = 0; n < batch; ++n)
        for (int64_t o = 0; o < out_ch; ++o) {
          const double* p = self.grad.data() + (n * out_ch + o) * plane;
          gb[o] += std::accumulate(p, p + plane, 0.0);
        }
    }
  });
}

Var max_pool2d(const Var& x, int k) {
  require(x.value().rank() == 4 && k > 0, "max_pool2d expects NCHW");
  const int64_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = h / k, ow = w / k;
  require(oh > 0 && ow > 0, "max_pool2d window larger than input");
  Tensor y({x.dim(0), x.dim(1), oh, ow});
  std::vector<int64_t> argmax(static_cast<size_t>(y.numel()));
  const double* xs = x.value().data();
  for (int64_t p = 0; p < nc; ++p) {
    for (int64_t i = 0; i < oh; ++i) {
      for (int64_t j = 0; j < ow; ++j) {
        int64_t best = p * h * w + (i * k) * w + j * k;
        for (int a = 0; a < k; ++a)
          for (int b = 0; b < k; ++b) {
            const int64_t idx = p * h * w + (i * k + a) * w + (j * k + b);
            if (xs[idx] > xs[best]) best = idx;
          }
        const int64_t o = (p * oh + i) * ow + j;
        y[o] = xs[best];
        argmax[static_cast<size_t>(o)] = best;
      }
    }
  }
  return make_op_result(std::move(y), {x}, [argmax = std::move(argmax)](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[static_cast<int64_t>(o)];
  });
}

Var avg_pool2d(const Var& x, int k) {
  require(x.value().rank() == 4 && k > 0, "avg_pool2d expects NCHW");
  const int64_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = h / k, ow = w / k;
  require(oh > 0 && ow > 0, "avg_pool2d window larger than input");
  const double inv = 1.0 / (static_cast<double>(k) * k);
  Tensor y({x.dim(0), x.dim(1), oh, ow});
  const double* xs = x.value().data();
  for (int64_t p = 0; p < nc; ++p)
    for (int64_t i = 0; i < oh; ++i)
      for (int64_t j = 0; j < ow; ++j) {
        double s = 0.0;
        for (int a = 0; a < k; ++a)
          for (int b = 0; b < k; ++b) s += xs[p * h * w + (i * k + a) * w + (j * k + b)];
        y[(p * oh + i) * ow + j] = s * inv;
      }
  return make_op_result(std::move(y), {x}, [nc, h, w, oh, ow, k, inv](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int64_t p = 0; p < nc; ++p)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          const double gy = self.grad[(p * oh + i) * ow + j] * inv;
          for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) g[p * h * w + (i * k + a) * w + (j * k + b)] += gy;
        }
  });
}

Var global_avg_pool(const Var& x) {
  require(x.value().rank() == 4, "global_avg_pool expects NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  require(plane > 0, "global_avg_pool of empty plane");
  Tensor y({n, c});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* p = x.value().data() + i * plane;
    y[i] = std::accumulate(p, p + plane, 0.0) / static_cast<double>(plane);
  }
  return make_op_result(std::move(y), {x}, [plane](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const double inv = 1.0 / static_cast<double>(plane);
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      double* p = g.data() + i * plane;
      for (int64_t k = 0; k < plane; ++k) p[k] += self.grad[i] * inv;
    }
  });
}

namespace {

struct Interp {
  std::vector<int64_t> lo, hi;
  std::vector<double> frac;
};

Interp half_pixel_interp(int64_t in, int64_t out, int factor) {
  Interp r;
  r.lo.resize(static_cast<size_t>(out));
  r.hi.resize(static_cast<size_t>(out));
  r.frac.resize(static_cast<size_t>(out));
  for (int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    if (src < 0.0) src = 0.0;
    int64_t i0 = static_cast<int64_t>(std::floor(src));
    i0 = std::min(i0, in - 1);
    const size_t u = static_cast<size_t>(o);
    r.lo[u] = i0;
    r.hi[u] = std::min(i0 + 1, in - 1);
    r.frac[u] = src - static_cast<double>(i0);
  }
  return r;
}

}  // namespace

Var upsample_bilinear(const Var& x, int factor) {
  require(x.value().rank() == 4 && factor >= 1, "upsample_bilinear expects NCHW");
  const int64_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = h * factor, ow = w * factor;
  const Interp ry = half_pixel_interp(h, oh, factor);
  const Interp rx = half_pixel_interp(w, ow, factor);
  Tensor y({x.dim(0), x.dim(1), oh, ow});
  const double* xs = x.value().data();
  for (int64_t p = 0; p < nc; ++p) {
    const double* src = xs + p * h * w;
    double* dst = y.data() + p * oh * ow;
    for (int64_t i = 0; i < oh; ++i) {
      const size_t ui = static_cast<size_t>(i);
      const double fy = ry.frac[ui];
      const double* r0 = src + ry.lo[ui] * w;
      const double* r1 = src + ry.hi[ui] * w;
      for (int64_t j = 0; j < ow; ++j) {
        const size_t uj = static_cast<size_t>(j);
        const double fx = rx.frac[uj];
        const double top = r0[rx.lo[uj]] * (1.0 - fx) + r0[rx.hi[uj]] * fx;
        const double bot = r1[rx.lo[uj]] * (1.0 - fx) + r1[rx.hi[uj]] * fx;
        dst[i * ow + j] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return make_op_result(std::move(y), {x}, [nc, h, w, oh, ow, ry, rx](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int64_t p = 0; p < nc; ++p) {
      double* dst = g.data() + p * h * w;
      const double* gy = self.grad.data() + p * oh * ow;
      for (int64_t i = 0; i < oh; ++i) {
        const size_t ui = static_cast<size_t>(i);
        const double fy = ry.frac[ui];
        double* r0 = dst + ry.lo[ui] * w;
        double* r1 = dst + ry.hi[ui] * w;
        for (int64_t j = 0; j < ow; ++j) {
          const size_t uj = static_cast<size_t>(j);
          const double fx = rx.frac[uj];
          const double v = gy[i * ow + j];
          r0[rx.lo[uj]] += v * (1.0 - fy) * (1.0 - fx);
          r0[rx.hi[uj]] += v * (1.0 - fy) * fx;
          r1[rx.lo[uj]] += v * fy * (1.0 - fx);
          r1[rx.hi[uj]] += v * fy * fx;
        }
      }
    }
  });
}

Var spatial_softmax(const Var& x) {
  require(x.value().rank() >= 2, "spatial_softmax needs a leading batch axis");
  const int64_t n = x.dim(0);
  const int64_t m = n > 0 ? x.value().numel() / n : 0;
  Tensor y(x.shape());
  for (int64_t i = 0; i < n; ++i) {
    const double* src = x.value().data() + i * m;
    double* dst = y.data() + i * m;
    const double mx = *std::max_element(src, src + m);
    double z = 0.0;
    for (int64_t k = 0; k < m; ++k) z += (dst[k] = std::exp(src[k] - mx));
    for (int64_t k = 0; k < m; ++k) dst[k] /= z;
  }
  return make_op_result(std::move(y), {x}, [n, m](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < n; ++i) {
      const double* yv = self.value.data() + i * m;
      const double* gy = self.grad.data() + i * m;
      double dot = 0.0;
      for (int64_t k = 0; k < m; ++k) dot += gy[k] * yv[k];
      for (int64_t k = 0; k < m; ++k) g[i * m + k] += yv[k] * (gy[k] - dot);
    }
  });
}

Var masked_softmax(const Var& scores, const Tensor& mask) {
  require(scores.value().rank() == 2 && scores.shape() == mask.shape(), "masked_softmax shapes");
  const int64_t rows = scores.dim(0), cols = scores.dim(1);
  Tensor y(scores.shape(), 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < cols; ++c)
      if (mask[r * cols + c] > 0.0) mx = std::max(mx, scores.value()[r * cols + c]);
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (int64_t c = 0; c < cols; ++c)
      if (mask[r * cols + c] > 0.0) z += (y[r * cols + c] = std::exp(scores.value()[r * cols + c] - mx));
    for (int64_t c = 0; c < cols; ++c) y[r * cols + c] /= z;
  }
  return make_op_result(std::move(y), {scores}, [rows, cols](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int64_t r = 0; r < rows; ++r) {
      const double* yv = self.value.data() + r * cols;
      const double* gy = self.grad.data() + r * cols;
      double dot = 0.0;
      for (int64_t c = 0; c < cols; ++c) dot += gy[c] * yv[c];
      // Masked entries have y = 0 and so receive no gradient.
      for (int64_t c = 0; c < cols; ++c) g[r * cols + c] += yv[c] * (gy[c] - dot);
    }
  });
}

Var weighted_map_sum(const Var& weights, const Tensor& kernels) {
  require(weights.value().rank() == 2 && kernels.rank() == 4 && kernels.dim(0) == weights.dim(0) &&
              kernels.dim(1) == weights.dim(1),
          "weighted_map_sum shapes " + shape_to_string(weights.shape()) + " and " + shape_to_string(kernels.shape()));
  const int64_t t = kernels.dim(0), n = kernels.dim(1), plane = kernels.dim(2) * kernels.dim(3);
  Tensor y({t, 1, kernels.dim(2), kernels.dim(3)}, 0.0);
  for (int64_t i = 0; i < t; ++i)
    for (int64_t f = 0; f < n; ++f) {
      const double wv = weights.value()[i * n + f];
      if (wv == 0.0) continue;
      const double* k = kernels.data() + (i * n + f) * plane;
      double* dst = y.data() + i * plane;
      for (int64_t p = 0; p < plane; ++p) dst[p] += wv * k[p];
    }
  return make_op_result(std::move(y), {weights}, [kernels, t, n, plane](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < t; ++i)
      for (int64_t f = 0; f < n; ++f) {
        const double* k = kernels.data() + (i * n + f) * plane;
        const double* gy = self.grad.data() + i * plane;
        double s = 0.0;
        for (int64_t p = 0; p < plane; ++p) s += gy[p] * k[p];
        g[i * n + f] += s;
      }
  });
}

}  // namespace avsal::ops
