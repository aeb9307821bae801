#pragma once

// Shared helpers for the test binaries: random tensors and a central
// finite-difference gradient check in double precision.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spikegate/init.hpp"
#include "spikegate/ops.hpp"
#include "spikegate/tensor.hpp"

namespace testing {

using spikegate::Index;
using spikegate::Shape;
using TensorD = spikegate::BasicTensor<double>;
using TapeD = spikegate::BasicTape<double>;
using TapeScopeD = spikegate::BasicTapeScope<double>;

inline TensorD uniform(const Shape& shape, spikegate::Rng& rng, double lo = -1.0, double hi = 1.0,
                       bool requires_grad = true) {
  std::uniform_real_distribution<double> d(lo, hi);
  TensorD::Vector v(spikegate::numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = d(rng);
  return TensorD(shape, std::move(v), requires_grad);
}

/// Uniform values with |x| >= margin, for functions with a kink at zero.
inline TensorD away_from_zero(const Shape& shape, spikegate::Rng& rng, double margin = 0.05) {
  std::uniform_real_distribution<double> d(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  TensorD::Vector v(spikegate::numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = sign(rng) ? d(rng) : -d(rng);
  return TensorD(shape, std::move(v), true);
}

struct GradCheck {
  double worst_relative_error = 0;
  std::size_t checked = 0;
  /// Elements whose stencil straddles a kink.
  std::size_t skipped = 0;

  bool passes(double tol = 1e-2) const { return worst_relative_error < tol && skipped * 4 <= checked; }
};

/// Compares the tape gradient of scalar `f(inputs)` with central differences
/// of step h for every input element. The relative error per input tensor is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8), taken over
/// the elements where f is smooth across [x - h, x + h].
inline GradCheck grad_check(const std::function<TensorD(const std::vector<TensorD>&)>& f,
                            std::vector<TensorD> inputs, double h = 1e-3) {
  for (auto& t : inputs) t.zero_grad();
  {
    TapeD tape;
    TapeScopeD scope(tape);
    TensorD loss = f(inputs);
    spikegate::backward(tape, loss);
  }
  GradCheck out;
  for (auto& t : inputs) {
    const TensorD::Vector analytic =
        t.has_grad() ? TensorD::Vector(t.grad()) : TensorD::Vector::Zero(t.numel());
    TensorD::Vector analytic_kept = analytic;
    TensorD::Vector numeric(t.numel());
    auto central = [&](Index i, double step) {
      const double keep = t.values()[i];
      t.mutable_values()[i] = keep + step;
      const double up = f(inputs).item();
      t.mutable_values()[i] = keep - step;
      const double down = f(inputs).item();
      t.mutable_values()[i] = keep;
      return (up - down) / (2 * step);
    };
    for (Index i = 0; i < t.numel(); ++i) {
      numeric[i] = central(i, h);
      // A kink inside the stencil shows up as disagreement with a narrower one.
      const double narrow = central(i, h / 4);
      if (std::abs(numeric[i] - narrow) > 1e-4 * std::max({1.0, std::abs(numeric[i]), std::abs(narrow)})) {
        numeric[i] = analytic_kept[i] = 0;
        ++out.skipped;
      }
    }
    const double denom = std::max({analytic_kept.norm(), numeric.norm(), 1e-8});
    out.worst_relative_error = std::max(out.worst_relative_error, (analytic_kept - numeric).norm() / denom);
    out.checked += static_cast<std::size_t>(t.numel());
  }
  return out;
}

/// Weighted sum with fixed pseudo-random weights, so every output element
/// contributes a distinct amount to the scalar under test.
inline TensorD weighted_sum(const TensorD& y, std::uint64_t seed = 7) {
  spikegate::Rng rng(seed);
  TensorD w = uniform(y.shape(), rng, -1.0, 1.0, false);
  return spikegate::sum(spikegate::hadamard(y, w));
}

}  // namespace testing
