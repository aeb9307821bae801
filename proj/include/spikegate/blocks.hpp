#pragma once

// Membrane-shortcut residual blocks.
//
// Both variants take and return membrane-domain values [T, B, C, H, W]: the
// first thing a block does is fire its input neurons, so every convolution
// inside consumes binary spike maps, and the shortcut is added on the
// pre-neuron values.
//
//   regular:      LIF > conv k (s) > GN > LIF > conv k > GN
//   lightweight:  LIF > dw k (s) > GN > LIF > pw 1x1 > GN > LIF > dw k > GN
//   shortcut:     identity, or GN(conv 1x1 stride s) on the first spike map
//                 when channels or resolution change

#include <string>
#include <vector>

#include "spikegate/checkpoint.hpp"
#include "spikegate/energy.hpp"
#include "spikegate/init.hpp"
#include "spikegate/lif.hpp"

namespace spikegate {

enum class BlockKind { regular, lightweight };

const char* to_string(BlockKind kind);
BlockKind parse_block_kind(const std::string& text);

struct BlockSpec {
  BlockKind kind = BlockKind::regular;
  Index c_in = 1;
  Index c_out = 1;
  Index k = 3;
  Index stride = 1;
  Index in_h = 8;
  Index in_w = 8;

  void validate() const;
  Index padding() const { return k / 2; }
  Index out_h() const { return (in_h + 2 * padding() - k) / stride + 1; }
  Index out_w() const { return (in_w + 2 * padding() - k) / stride + 1; }
  bool needs_projection() const { return c_in != c_out || stride != 1; }
  BlockSpec with_kind(BlockKind other) const {
    BlockSpec s = *this;
    s.kind = other;
    return s;
  }
};

template <typename Scalar>
struct BasicSpikeBlock {
  BlockSpec spec;
  // regular:     [Cout,Cin,k,k], [Cout,Cout,k,k]
  // lightweight: [Cin,1,k,k], [Cout,Cin,1,1], [Cout,1,k,k]
  std::vector<BasicTensor<Scalar>> convs;
  std::vector<BasicTensor<Scalar>> norm_gamma;
  std::vector<BasicTensor<Scalar>> norm_beta;
  BasicTensor<Scalar> projection;  // [Cout,Cin,1,1] when spec.needs_projection()
  BasicTensor<Scalar> projection_gamma;
  BasicTensor<Scalar> projection_beta;

  static BasicSpikeBlock init(const BlockSpec& spec, Rng& rng);

  std::vector<BasicNamedTensor<Scalar>> named_parameters(const std::string& prefix) const;

  /// Main-path convolution weights (no norms, no projection).
  const std::vector<BasicTensor<Scalar>>& conv_weights() const { return convs; }

  BasicTensor<Scalar> forward(const BasicTensor<Scalar>& x, const LifParams& lif,
                              ActivityRecorder* recorder = nullptr, const std::string& name = "block") const;
};

using SpikeBlock = BasicSpikeBlock<float>;

template <typename Scalar>
BasicTensor<Scalar> regular_block_forward(const BasicTensor<Scalar>& x, const BasicSpikeBlock<Scalar>& block,
                                          const LifParams& lif, ActivityRecorder* recorder = nullptr);

template <typename Scalar>
BasicTensor<Scalar> lightweight_block_forward(const BasicTensor<Scalar>& x, const BasicSpikeBlock<Scalar>& block,
                                              const LifParams& lif, ActivityRecorder* recorder = nullptr);

}  // namespace spikegate
