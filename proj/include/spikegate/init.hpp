#pragma once

#include <cmath>
#include <random>

#include "spikegate/tensor.hpp"

namespace spikegate {

using Rng = std::mt19937_64;

/// Uniform(-b, b) with b = sqrt(6 / fan_in); marked as a trainable leaf.
template <typename Scalar>
BasicTensor<Scalar> kaiming_uniform(const Shape& shape, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  typename BasicTensor<Scalar>::Vector v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(dist(rng));
  return BasicTensor<Scalar>(shape, std::move(v), true);
}

template <typename Scalar>
BasicTensor<Scalar> trainable_full(const Shape& shape, Scalar value) {
  return BasicTensor<Scalar>::full(shape, value).set_requires_grad(true);
}

template <typename Scalar>
BasicTensor<Scalar> random_normal(const Shape& shape, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  typename BasicTensor<Scalar>::Vector v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(dist(rng));
  return BasicTensor<Scalar>(shape, std::move(v));
}

}  // namespace spikegate
