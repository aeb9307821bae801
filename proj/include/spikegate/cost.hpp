#pragma once

// Closed-form parameter and multiply-accumulate counts for the residual blocks.
//
// A k x k convolution from Cin to Cout channels evaluated at Hout x Wout
// positions costs k*k*Cin*Cout weights and k*k*Cin*Cout*Hout*Wout MACs. A
// depthwise stage drops the Cout factor; a pointwise stage is the k = 1 case.
// Shortcut projections are reported apart from the main path.

#include <cstdint>
#include <string>
#include <vector>

#include "spikegate/blocks.hpp"

namespace spikegate {

struct LayerCost {
  std::string name;
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct CostReport {
  std::vector<LayerCost> layers;    // main path
  std::vector<LayerCost> shortcut;  // projection, if any

  std::int64_t params() const;
  std::int64_t flops() const;
  std::int64_t shortcut_params() const;
  std::int64_t shortcut_flops() const;
};

std::int64_t conv_params(Index k, Index c_in, Index c_out);
std::int64_t conv_flops(Index k, Index c_in, Index c_out, Index out_h, Index out_w);

CostReport count_regular(const BlockSpec& spec);
CostReport count_lightweight(const BlockSpec& spec);
CostReport count_block(const BlockSpec& spec);

struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Lightweight over regular, main path only.
struct CostRatio {
  Ratio params;
  Ratio flops;
};

CostRatio cost_ratio(const BlockSpec& spec);

/// Cost of one depthwise + pointwise pair relative to the vanilla convolution
/// it replaces: 1/Cout + 1/k^2 for both parameters and MACs.
double replacement_ratio(Index k, Index c_in, Index c_out);

/// Cin = 2 Cout, k = 3, stride 2.
bool in_reference_regime(const BlockSpec& spec);

/// The closed form printed with the lightweight-block derivation,
/// 1/(2 Cin) + 1/27. Reported next to the measured ratio; it does not follow
/// from the per-layer counts.
double claimed_ratio_form(Index c_in);

}  // namespace spikegate
