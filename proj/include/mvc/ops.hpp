#pragma once

// Differentiable tensor ops. Binary element-wise ops follow numpy
// broadcasting. Spatial ops use channel-first layouts without a batch axis:
// images are [C, H, W] and volumes [C, D, H, W].

#include <span>
#include <vector>

#include "mvc/tensor.hpp"

namespace mvc {

Shape broadcast_shapes(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, int64_t axis, bool keepdim = false);
Tensor mse(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int64_t>& order);
Tensor transpose(const Tensor& a, int64_t axis0, int64_t axis1);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor concat(std::span<const Tensor> parts, int64_t axis);
Tensor stack(std::span<const Tensor> parts, int64_t axis);
Tensor slice(const Tensor& a, int64_t axis, int64_t start, int64_t length);

// [..., m, k] x [..., k, n] -> [..., m, n]; batch axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in] * w[in, out] + b[out]; `b` may be undefined. A rank-1 x is a
// single row.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Max-shifted softmax along `axis`.
Tensor softmax(const Tensor& a, int64_t axis);
// `mask` is a constant 0/1 tensor broadcastable to `a`. Masked entries get
// zero probability; a slice with no unmasked entry yields all zeros.
Tensor masked_softmax(const Tensor& a, const Tensor& mask, int64_t axis);

// Scaled dot-product attention with `heads` heads laid out as contiguous
// column groups: q [B, Lq, W], k and v [B, Lk, W] -> [B, Lq, W]. `key_mask`
// is a constant 0/1 [B, Lk] (or undefined); masked keys get zero weight and a
// query with no unmasked key outputs zeros. `weights`, when given, receives
// the [B, heads, Lq, Lk] probabilities as a constant tensor.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& key_mask, int64_t heads,
                 Tensor* weights = nullptr);

// Stride-1 cross-correlation with zero "same" padding; odd kernels only.
// `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor avg_pool2(const Tensor& x);
Tensor upsample_nearest2(const Tensor& x);
// x[C, ...]; per-channel affine after normalising over each channel group.
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int64_t groups, double eps = 1e-5);

struct Sampled {
    Tensor features;  // [K, C]
    Tensor mask;      // [K], 1 where every interpolation corner exists
};

// Coordinates are continuous lattice indices, (row, col) for 2D and
// (a, b, c) for a [C, A, B, Cdim] volume. Out-of-range samples are zero with
// mask 0. Differentiable in the sampled map only.
Sampled bilinear_sample2d(const Tensor& map, const Tensor& coords);
Sampled trilinear_sample3d(const Tensor& volume, const Tensor& coords);

}  // namespace mvc
