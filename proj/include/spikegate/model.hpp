#pragma once

// Desk-scale spiking network:
//
//   encoder (direct | CSGC) > stem conv 3x3 + GN > 3 residual blocks > LIF
//   classify: spatial mean > mean over T > linear
//   detect:   1x1 heatmap and 8-channel regression heads > mean over T

#include <optional>
#include <string>
#include <vector>

#include "spikegate/blocks.hpp"
#include "spikegate/config.hpp"
#include "spikegate/csgc.hpp"

namespace spikegate {

struct ModelSpec {
  Task task = Task::classify;
  Coding coding = Coding::csgc;
  CsgcOptions attention;
  BlockKind block = BlockKind::regular;
  std::vector<Index> widths{8, 16, 32};
  Index in_channels = 3;
  Index in_h = 16;
  Index in_w = 16;
  Index outputs = 10;  // classes, or heatmap categories when detecting
  Index time_steps = 4;
  LifParams lif;

  /// (1, 2, 2) when classifying; (2, 2, 1) when detecting, for an overall
  /// output stride of 4.
  std::vector<Index> stage_strides() const;
  Index out_h() const;
  Index out_w() const;
};

ModelSpec model_spec(const RunConfig& cfg, Index in_channels, Index in_h, Index in_w, Index outputs);

template <typename Scalar>
struct BasicModelOutput {
  BasicTensor<Scalar> logits;       // [B, classes]
  BasicTensor<Scalar> heat_logits;  // [B, K, h, w]
  BasicTensor<Scalar> regression;   // [B, 8, h, w]
};

template <typename Scalar>
struct BasicSpikeNet {
  ModelSpec spec;
  std::optional<BasicCsgcParams<Scalar>> csgc;
  BasicTensor<Scalar> stem, stem_gamma, stem_beta;
  std::vector<BasicSpikeBlock<Scalar>> stages;
  BasicTensor<Scalar> fc_weight, fc_bias;
  BasicTensor<Scalar> heat_weight, heat_bias, reg_weight, reg_bias;

  static BasicSpikeNet init(const ModelSpec& spec, Rng& rng);

  std::vector<BasicNamedTensor<Scalar>> named_parameters() const;

  /// x: [B, C, H, W] static input.
  BasicModelOutput<Scalar> forward(const BasicTensor<Scalar>& x, ActivityRecorder* recorder = nullptr) const;
};

using SpikeNet = BasicSpikeNet<float>;
using ModelOutput = BasicModelOutput<float>;

}  // namespace spikegate
