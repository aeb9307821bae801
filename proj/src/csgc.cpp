#include "spikegate/csgc.hpp"

#include <stdexcept>

#include "spikegate/ops.hpp"

namespace spikegate {

template <typename Scalar>
BasicCsgcParams<Scalar> BasicCsgcParams<Scalar>::init(Index channels, Index reduction, Rng& rng) {
  if (channels < 1 || reduction < 1) throw std::invalid_argument("csgc: channels and reduction must be >= 1");
  BasicCsgcParams p;
  p.channels = channels;
  p.reduction = reduction;
  const Index hid = p.hidden();
  p.ca_fc1 = kaiming_uniform<Scalar>({hid, channels}, channels, rng);
  p.ca_fc2 = kaiming_uniform<Scalar>({channels, hid}, hid, rng);
  for (std::size_t b = 0; b < kCsgcKernels.size(); ++b) {
    const Index k = kCsgcKernels[b];
    p.sa_inner[b] = kaiming_uniform<Scalar>({channels, channels, k, k}, channels * k * k, rng);
    p.sa_outer[b] = kaiming_uniform<Scalar>({channels, channels, k, k}, channels * k * k, rng);
    p.branch_weight[b] = trainable_full<Scalar>({1}, Scalar(1) / Scalar(3));
  }
  return p;
}

template <typename Scalar>
std::vector<BasicNamedTensor<Scalar>> BasicCsgcParams<Scalar>::named_parameters(const std::string& prefix) const {
  std::vector<BasicNamedTensor<Scalar>> out{{prefix + "ca.fc1", ca_fc1}, {prefix + "ca.fc2", ca_fc2}};
  static const char* kBranchNames[] = {"alpha", "beta", "gamma"};
  for (std::size_t b = 0; b < kCsgcKernels.size(); ++b) {
    const std::string k = std::to_string(kCsgcKernels[b]);
    out.push_back({prefix + "sa.conv" + k + ".inner", sa_inner[b]});
    out.push_back({prefix + "sa.conv" + k + ".outer", sa_outer[b]});
    out.push_back({prefix + "sa." + kBranchNames[b], branch_weight[b]});
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> channel_attention(const BasicTensor<Scalar>& x, const BasicCsgcParams<Scalar>& params,
                                      ActivityRecorder* recorder) {
  if (x.rank() != 4 || x.dim(1) != params.channels) {
    throw ShapeError("channel_attention: input " + to_string(x.shape()) + " axis 1 must equal " +
                     std::to_string(params.channels));
  }
  const Index b = x.dim(0), c = x.dim(1);
  auto pooled = reshape(spatial_mean(x), {b, c});
  if (recorder) recorder->linear("csgc.ca.fc1", pooled, params.hidden(), false, 1);
  auto hidden = relu(linear(pooled, params.ca_fc1));
  if (recorder) recorder->linear("csgc.ca.fc2", hidden, c, false, 1);
  return reshape(linear(hidden, params.ca_fc2), {b, c, 1, 1});
}

template <typename Scalar>
BasicTensor<Scalar> spatial_attention(const BasicTensor<Scalar>& x, const BasicCsgcParams<Scalar>& params,
                                      ActivityRecorder* recorder) {
  if (x.rank() != 4 || x.dim(1) != params.channels) {
    throw ShapeError("spatial_attention: input " + to_string(x.shape()) + " axis 1 must equal " +
                     std::to_string(params.channels));
  }
  BasicTensor<Scalar> acc = x;
  for (std::size_t br = 0; br < kCsgcKernels.size(); ++br) {
    const Index k = kCsgcKernels[br];
    const Index pad = k / 2;
    const ConvGeometry geom{params.channels, params.channels, k, 1, pad, false};
    const std::string name = "csgc.sa.conv" + std::to_string(k);
    if (recorder) recorder->conv(name + ".inner", x, geom, false, 1);
    auto inner = relu(conv2d(x, params.sa_inner[br], 1, pad));
    if (recorder) recorder->conv(name + ".outer", inner, geom, false, 1);
    auto outer = conv2d(inner, params.sa_outer[br], 1, pad);
    acc = add(acc, hadamard(outer, params.branch_weight[br]));
  }
  return acc;
}

template <typename Scalar>
BasicTensor<Scalar> gate(const BasicTensor<Scalar>& sa, const BasicTensor<Scalar>& ca) {
  return sigmoid(hadamard(sa, ca));
}

template <typename Scalar>
BasicTensor<Scalar> gate_map(const BasicTensor<Scalar>& x, const BasicCsgcParams<Scalar>& params,
                             const CsgcOptions& options, ActivityRecorder* recorder) {
  BasicTensor<Scalar> sa = options.spatial_attention ? spatial_attention(x, params, recorder) : x;
  if (!options.channel_attention) return sigmoid(sa);
  return gate(sa, channel_attention(x, params, recorder));
}

template <typename Scalar>
BasicTensor<Scalar> synaptic_filter(const BasicTensor<Scalar>& gate_values, const BasicTensor<Scalar>& spikes) {
  if (spikes.rank() != gate_values.rank() + 1) {
    throw ShapeError("synaptic_filter: spikes " + to_string(spikes.shape()) + " must be [T] + gate " +
                     to_string(gate_values.shape()));
  }
  return hadamard(spikes, gate_values);
}

template <typename Scalar>
BasicCodedInput<Scalar> csgc_encode(const BasicTensor<Scalar>& x, Index steps, const BasicCsgcParams<Scalar>& params,
                                    const LifParams& lif, const CsgcOptions& options, ActivityRecorder* recorder) {
  if (steps < 1) throw std::invalid_argument("csgc_encode: time steps must be >= 1");
  auto spikes = lif_forward(repeat_time(x, steps), lif);
  auto o = gate_map(x, params, options, recorder);
  return {synaptic_filter(o, spikes)};
}

template <typename Scalar>
BasicCodedInput<Scalar> direct_encode(const BasicTensor<Scalar>& x, Index steps) {
  if (steps < 1) throw std::invalid_argument("direct_encode: time steps must be >= 1");
  return {repeat_time(x, steps)};
}

#define SPIKEGATE_INSTANTIATE(S)                                                                                 \
  template struct BasicCsgcParams<S>;                                                                            \
  template BasicTensor<S> channel_attention<S>(const BasicTensor<S>&, const BasicCsgcParams<S>&,                 \
                                               ActivityRecorder*);                                               \
  template BasicTensor<S> spatial_attention<S>(const BasicTensor<S>&, const BasicCsgcParams<S>&,                 \
                                               ActivityRecorder*);                                               \
  template BasicTensor<S> gate<S>(const BasicTensor<S>&, const BasicTensor<S>&);                                 \
  template BasicTensor<S> gate_map<S>(const BasicTensor<S>&, const BasicCsgcParams<S>&, const CsgcOptions&,      \
                                      ActivityRecorder*);                                                        \
  template BasicTensor<S> synaptic_filter<S>(const BasicTensor<S>&, const BasicTensor<S>&);                      \
  template BasicCodedInput<S> csgc_encode<S>(const BasicTensor<S>&, Index, const BasicCsgcParams<S>&,            \
                                             const LifParams&, const CsgcOptions&, ActivityRecorder*);           \
  template BasicCodedInput<S> direct_encode<S>(const BasicTensor<S>&, Index);

SPIKEGATE_INSTANTIATE(float)
SPIKEGATE_INSTANTIATE(double)

#undef SPIKEGATE_INSTANTIATE

}  // namespace spikegate
