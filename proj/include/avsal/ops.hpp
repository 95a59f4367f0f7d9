// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable tensor operations. Image tensors are NCHW (NCDHW for the
// volumetric convolution). Every op throws ShapeError on incompatible inputs.

#pragma once

#include <array>
#include <span>

#include "avsal/autograd.hpp"

namespace avsal::ops {

// Elementwise, same shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var mul_const(const Var& a, const Tensor& factor);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);

Var reshape(const Var& x, Shape shape);
Var concat(std::span<const Var> parts, size_t axis);
Var slice(const Var& x, size_t axis, int64_t begin, int64_t end);
/// Gathers rows (axis 0) in the given order; repeated rows accumulate
/// gradient.
Var index_select(const Var& x, std::span<const int64_t> rows);
/// Multiplies row i (axis 0) by factors[i].
Var scale_rows(const Var& x, std::span<const double> factors);

/// 2-D matrix product.
Var matmul(const Var& a, const Var& b);
/// y = x·wᵀ + b with x (B, in), w (out, in), b (out) or undefined.
Var linear(const Var& x, const Var& w, const Var& b);

/// x (N,C,H,W), w (O,C,k,k), b (O) or undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding);
/// x (N,Ci,H,W), w (Ci,Co,k,k); output side (H-1)·stride - 2·padding + k.
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int padding);
/// x (N,C,D,H,W), w (O,C,kd,kh,kw); stride/padding ordered (d,h,w).
Var conv3d(const Var& x, const Var& w, const Var& b, std::array<int, 3> stride,
           std::array<int, 3> padding);

/// Non-overlapping k×k pooling (kernel = stride = k, floor on ragged edges).
Var max_pool2d(const Var& x, int k);
Var avg_pool2d(const Var& x, int k);
/// (N,C,H,W) -> (N,C)
Var global_avg_pool(const Var& x);
/// Bilinear ×factor resize with half-pixel centers (align_corners = false).
Var upsample_bilinear(const Var& x, int factor);

/// Softmax over all non-leading axes, independently for each index of axis 0.
Var spatial_softmax(const Var& x);
/// Row-wise softmax of (R, N) scores restricted to entries with mask > 0.
/// Masked entries are 0; a row with no unmasked entry is all zeros.
Var masked_softmax(const Var& scores, const Tensor& mask);
/// weights (T,N), kernels (T,N,H,W) -> (T,1,H,W), y_t = Σ_n w_tn·K_tn.
Var weighted_map_sum(const Var& weights, const Tensor& kernels);

}  // namespace avsal::ops
