#pragma once

// Discrete-time leaky integrate-and-fire neurons.
//
//   U[t] = H[t-1] + I[t]
//   S[t] = 1 if U[t] >= u_th else 0
//   H[t] = tau * U[t] * (1 - S[t]) + u_reset * S[t]
//
// The backward pass replaces dS/dU with a rectangular window of width a
// and height 1/a centred on the threshold.

#include "spikegate/tensor.hpp"

namespace spikegate {

enum class SpikeFunction {
  heaviside,
  /// clamp((U - u_th)/a + 1/2, 0, 1): the function whose derivative is the
  /// rectangular surrogate. Used to check the surrogate path numerically.
  linear_ramp,
};

struct LifParams {
  double tau = 0.5;
  double u_th = 0.75;
  double u_reset = 0.0;
  double surrogate_width = 1.0;
  SpikeFunction spike_fn = SpikeFunction::heaviside;

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

template <typename Scalar>
struct BasicLifState {
  BasicTensor<Scalar> h;

  static BasicLifState zeros(const Shape& shape) { return {BasicTensor<Scalar>::zeros(shape)}; }
};

using LifState = BasicLifState<float>;

template <typename Scalar>
struct LifStepResult {
  BasicTensor<Scalar> spikes;
  BasicLifState<Scalar> state;
};

/// One update of every neuron. Not recorded on the tape.
template <typename Scalar>
LifStepResult<Scalar> lif_step(const BasicLifState<Scalar>& state, const BasicTensor<Scalar>& current,
                               const LifParams& params);

/// Runs the neurons over the leading time axis of `currents` from a zero
/// membrane and returns the spike maps [T, ...]. Differentiable (BPTT with the
/// surrogate derivative).
template <typename Scalar>
BasicTensor<Scalar> lif_forward(const BasicTensor<Scalar>& currents, const LifParams& params);

/// Surrogate derivative of the spike function at distance `u_minus_th` from threshold.
double surrogate_gradient(double u_minus_th, double width);

/// Elementwise surrogate_gradient.
template <typename Scalar>
BasicTensor<Scalar> heaviside_surrogate_backward(const BasicTensor<Scalar>& u_minus_th, double width);

}  // namespace spikegate
