#pragma once

// Cross-scale gated coding.
//
// The static image is repeated over T steps and driven through an encoder
// LIF layer. In parallel a gate map is computed once from the image:
//
//   CA(x) = Linear(ReLU(Linear(GAP(x))))                       [B, C, 1, 1]
//   SA(x) = sum_k  w_k * Conv_k(ReLU(Conv_k(x))) + x,  k = 3,5,7 [B, C, H, W]
//   O(x)  = sigmoid(SA(x) * CA(x))
//
// and every spike map is filtered by it: out[t] = O(x) * S[t].

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "spikegate/checkpoint.hpp"
#include "spikegate/energy.hpp"
#include "spikegate/init.hpp"
#include "spikegate/lif.hpp"

namespace spikegate {

inline constexpr std::array<Index, 3> kCsgcKernels{3, 5, 7};

template <typename Scalar>
struct BasicCsgcParams {
  Index channels = 0;
  Index reduction = 4;
  BasicTensor<Scalar> ca_fc1;  // [hidden, C]
  BasicTensor<Scalar> ca_fc2;  // [C, hidden]
  std::array<BasicTensor<Scalar>, 3> sa_inner;  // [C, C, k, k]
  std::array<BasicTensor<Scalar>, 3> sa_outer;  // [C, C, k, k]
  // Branch weights for k = 3, 5, 7 (alpha, beta, gamma), each of shape [1].
  std::array<BasicTensor<Scalar>, 3> branch_weight;

  static BasicCsgcParams init(Index channels, Index reduction, Rng& rng);

  Index hidden() const { return std::max<Index>(channels / reduction, 1); }
  std::vector<BasicNamedTensor<Scalar>> named_parameters(const std::string& prefix) const;
};

using CsgcParams = BasicCsgcParams<float>;

struct CsgcOptions {
  bool channel_attention = true;
  bool spatial_attention = true;
};

template <typename Scalar>
struct BasicCodedInput {
  BasicTensor<Scalar> values;  // [T, B, C, H, W]
};

using CodedInput = BasicCodedInput<float>;

template <typename Scalar>
BasicTensor<Scalar> channel_attention(const BasicTensor<Scalar>& x, const BasicCsgcParams<Scalar>& params,
                                      ActivityRecorder* recorder = nullptr);

template <typename Scalar>
BasicTensor<Scalar> spatial_attention(const BasicTensor<Scalar>& x, const BasicCsgcParams<Scalar>& params,
                                      ActivityRecorder* recorder = nullptr);

/// sigmoid(sa * ca) with ca broadcast over the spatial axes.
template <typename Scalar>
BasicTensor<Scalar> gate(const BasicTensor<Scalar>& sa, const BasicTensor<Scalar>& ca);

/// Gate map for `x` with either attention branch optionally disabled
/// (a disabled CA contributes ones, a disabled SA contributes x itself).
template <typename Scalar>
BasicTensor<Scalar> gate_map(const BasicTensor<Scalar>& x, const BasicCsgcParams<Scalar>& params,
                             const CsgcOptions& options = {}, ActivityRecorder* recorder = nullptr);

/// gate [B, C, H, W] applied to every step of spikes [T, B, C, H, W].
template <typename Scalar>
BasicTensor<Scalar> synaptic_filter(const BasicTensor<Scalar>& gate_values, const BasicTensor<Scalar>& spikes);

template <typename Scalar>
BasicCodedInput<Scalar> csgc_encode(const BasicTensor<Scalar>& x, Index steps, const BasicCsgcParams<Scalar>& params,
                                    const LifParams& lif, const CsgcOptions& options = {},
                                    ActivityRecorder* recorder = nullptr);

/// The input repeated unchanged at every step.
template <typename Scalar>
BasicCodedInput<Scalar> direct_encode(const BasicTensor<Scalar>& x, Index steps);

}  // namespace spikegate
