#pragma once

// Differentiable operators over BasicTensor.
//
// Image tensors are [N, C, H, W]. Elementwise binary ops broadcast with
// right-aligned extents: each axis must match or be 1 on one side, and
// missing leading axes count as 1.

#include <optional>
#include <vector>

#include "spikegate/tensor.hpp"

namespace spikegate {

/// Output extent of a strided, padded window along one axis.
inline Index conv_out_extent(Index in, Index k, Index stride, Index padding) {
  return (in + 2 * padding - k) / stride + 1;
}

Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename Scalar>
BasicTensor<Scalar> add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b);

template <typename Scalar>
BasicTensor<Scalar> sub(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b);

/// Elementwise product with broadcasting.
template <typename Scalar>
BasicTensor<Scalar> hadamard(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b);

template <typename Scalar>
BasicTensor<Scalar> scalar_mul(const BasicTensor<Scalar>& x, Scalar s);

template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& x);

/// Logistic function; results are kept strictly inside (0, 1).
template <typename Scalar>
BasicTensor<Scalar> sigmoid(const BasicTensor<Scalar>& x);

template <typename Scalar>
BasicTensor<Scalar> sum(const BasicTensor<Scalar>& x);

template <typename Scalar>
BasicTensor<Scalar> mean(const BasicTensor<Scalar>& x);

/// Same values, new extents. Element count must not change.
template <typename Scalar>
BasicTensor<Scalar> reshape(const BasicTensor<Scalar>& x, Shape shape);

/// [N, C, H, W] -> [N, C, 1, 1] average over the spatial axes.
template <typename Scalar>
BasicTensor<Scalar> spatial_mean(const BasicTensor<Scalar>& x);

/// [T, ...] -> [...] average over the leading axis.
template <typename Scalar>
BasicTensor<Scalar> time_mean(const BasicTensor<Scalar>& x);

/// [...] -> [T, ...] with the input copied into every slice.
template <typename Scalar>
BasicTensor<Scalar> repeat_time(const BasicTensor<Scalar>& x, Index steps);

/// Cross-correlation. x: [N, Cin, H, W], weight: [Cout, Cin, k, k], k odd.
template <typename Scalar>
BasicTensor<Scalar> conv2d(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight, Index stride,
                           Index padding);

/// Per-channel cross-correlation. weight: [C, 1, k, k].
template <typename Scalar>
BasicTensor<Scalar> depthwise_conv2d(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight,
                                     Index stride, Index padding);

/// 1x1 channel mixing. weight: [Cout, Cin, 1, 1].
template <typename Scalar>
BasicTensor<Scalar> pointwise_conv2d(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight);

/// Affine map over the trailing axis. weight: [M, N], bias: [M].
template <typename Scalar>
BasicTensor<Scalar> linear(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight,
                           const std::optional<BasicTensor<Scalar>>& bias = std::nullopt);

/// Group normalization of [N, C, H, W] followed by a per-channel affine map.
template <typename Scalar>
BasicTensor<Scalar> group_norm(const BasicTensor<Scalar>& x, Index groups, const BasicTensor<Scalar>& gamma,
                               const BasicTensor<Scalar>& beta, double eps = 1e-5);

/// Mean softmax cross-entropy of logits [B, K] against integer labels.
template <typename Scalar>
BasicTensor<Scalar> softmax_cross_entropy(const BasicTensor<Scalar>& logits, const std::vector<int>& labels);

/// 32 groups, 16 below 32 channels, one group per channel below 16.
Index default_groups(Index channels);

}  // namespace spikegate
