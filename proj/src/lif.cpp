#include "spikegate/lif.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spikegate {

void LifParams::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("lif: tau must lie in [0, 1]");
  if (!(u_th > u_reset)) throw std::invalid_argument("lif: u_th must exceed u_reset");
  if (!(surrogate_width > 0.0)) throw std::invalid_argument("lif: surrogate width must be positive");
}

double surrogate_gradient(double u_minus_th, double width) {
  return std::abs(u_minus_th) <= 0.5 * width ? 1.0 / width : 0.0;
}

namespace {

template <typename Scalar>
Scalar spike_value(Scalar u, Scalar th, Scalar width, SpikeFunction fn) {
  if (fn == SpikeFunction::heaviside) return u >= th ? Scalar(1) : Scalar(0);
  return std::clamp((u - th) / width + Scalar(0.5), Scalar(0), Scalar(1));
}

}  // namespace

template <typename Scalar>
LifStepResult<Scalar> lif_step(const BasicLifState<Scalar>& state, const BasicTensor<Scalar>& current,
                               const LifParams& params) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  params.validate();
  if (state.h.shape() != current.shape()) {
    throw ShapeError("lif_step: input " + to_string(current.shape()) + " does not match membrane " +
                     to_string(state.h.shape()));
  }
  if (!current.values().allFinite()) throw NumericError("lif_step: non-finite input current");
  const Scalar tau = static_cast<Scalar>(params.tau);
  const Scalar th = static_cast<Scalar>(params.u_th);
  const Scalar reset = static_cast<Scalar>(params.u_reset);
  const Scalar width = static_cast<Scalar>(params.surrogate_width);
  Vector spikes(current.numel());
  Vector h(current.numel());
  for (Index i = 0; i < current.numel(); ++i) {
    const Scalar u = state.h[i] + current[i];
    const Scalar s = spike_value(u, th, width, params.spike_fn);
    spikes[i] = s;
    h[i] = tau * u * (Scalar(1) - s) + reset * s;
  }
  return {BasicTensor<Scalar>(current.shape(), std::move(spikes)),
          BasicLifState<Scalar>{BasicTensor<Scalar>(current.shape(), std::move(h))}};
}

template <typename Scalar>
BasicTensor<Scalar> lif_forward(const BasicTensor<Scalar>& currents, const LifParams& params) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  params.validate();
  if (currents.rank() < 2) {
    throw ShapeError("lif_forward expects [T, ...] with at least one neuron axis, got " + to_string(currents.shape()));
  }
  if (currents.dim(0) < 1 || currents.numel() == 0) throw ShapeError("lif_forward needs at least one time step");
  if (!currents.values().allFinite()) throw NumericError("lif_forward: non-finite input current");
  const Index steps = currents.dim(0);
  const Index width_n = currents.numel() / steps;
  const Scalar tau = static_cast<Scalar>(params.tau);
  const Scalar th = static_cast<Scalar>(params.u_th);
  const Scalar reset = static_cast<Scalar>(params.u_reset);
  const Scalar width = static_cast<Scalar>(params.surrogate_width);
  const SpikeFunction fn = params.spike_fn;

  Vector membrane(currents.numel());  // U[t]
  Vector spikes(currents.numel());
  Vector h = Vector::Zero(width_n);
  const Scalar* in = currents.values().data();
  for (Index t = 0; t < steps; ++t) {
    const Index off = t * width_n;
    for (Index i = 0; i < width_n; ++i) {
      const Scalar u = h[i] + in[off + i];
      const Scalar s = spike_value(u, th, width, fn);
      membrane[off + i] = u;
      spikes[off + i] = s;
      h[i] = tau * u * (Scalar(1) - s) + reset * s;
    }
  }

  return record_op<Scalar>(
      currents.shape(), spikes, {currents},
      [currents, membrane, spikes, steps, width_n, tau, th, reset, width](const Vector& g) {
        // Reverse sweep. grad_h holds dL/dH[t] flowing back from U[t+1].
        Vector grad_in(currents.numel());
        Vector grad_h = Vector::Zero(width_n);
        const Scalar inv_w = Scalar(1) / width;
        const Scalar half_w = width / Scalar(2);
        for (Index t = steps; t-- > 0;) {
          const Index off = t * width_n;
          for (Index i = 0; i < width_n; ++i) {
            const Scalar u = membrane[off + i];
            const Scalar s = spikes[off + i];
            const Scalar ds = std::abs(u - th) <= half_w ? inv_w : Scalar(0);
            const Scalar dh_du = tau * (Scalar(1) - s) + (reset - tau * u) * ds;
            const Scalar grad_u = g[off + i] * ds + grad_h[i] * dh_du;
            grad_in[off + i] = grad_u;
            grad_h[i] = grad_u;
          }
        }
        accumulate_grad(currents, grad_in);
      });
}

template <typename Scalar>
BasicTensor<Scalar> heaviside_surrogate_backward(const BasicTensor<Scalar>& u_minus_th, double width) {
  typename BasicTensor<Scalar>::Vector out = u_minus_th.values().unaryExpr(
      [width](Scalar v) { return static_cast<Scalar>(surrogate_gradient(static_cast<double>(v), width)); });
  return BasicTensor<Scalar>(u_minus_th.shape(), std::move(out));
}

template LifStepResult<float> lif_step<float>(const BasicLifState<float>&, const BasicTensor<float>&,
                                              const LifParams&);
template LifStepResult<double> lif_step<double>(const BasicLifState<double>&, const BasicTensor<double>&,
                                                const LifParams&);
template BasicTensor<float> lif_forward<float>(const BasicTensor<float>&, const LifParams&);
template BasicTensor<double> lif_forward<double>(const BasicTensor<double>&, const LifParams&);
template BasicTensor<float> heaviside_surrogate_backward<float>(const BasicTensor<float>&, double);
template BasicTensor<double> heaviside_surrogate_backward<double>(const BasicTensor<double>&, double);

}  // namespace spikegate
