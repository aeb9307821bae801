#pragma once

// Synaptic-operation accounting and the accumulate-vs-multiply energy model.
//
// SNN-mode cost is 0.9 pJ per activated synaptic operation (one input spike
// reaching one output through one weight); ANN-mode cost is 4.6 pJ per dense
// multiply-accumulate. Layers fed by analog values (the encoder, the gate
// path, the read-out) are charged at the multiply rate in both modes.

#include <string>
#include <vector>

#include "spikegate/tensor.hpp"

namespace spikegate {

class SpikingPurityError : public NumericError {
 public:
  using NumericError::NumericError;
};

struct EnergyConstants {
  double pj_per_sop = 0.9;
  double pj_per_mac = 4.6;
};

double ec_snn(double sops, const EnergyConstants& constants = {});
double ec_ann(double flops, const EnergyConstants& constants = {});

/// 1 - snn/ann. Throws std::domain_error when ann <= 0.
double reduction_ratio(double ec_snn_pj, double ec_ann_pj);

struct ConvGeometry {
  Index c_in = 1;
  Index c_out = 1;
  Index k = 1;
  Index stride = 1;
  Index padding = 0;
  bool depthwise = false;
};

/// Per-sample activity of one layer.
struct LayerActivity {
  std::string layer;
  bool spiking = true;
  double spike_count = 0;    // input spikes, summed over time steps
  double sops = 0;           // activated synaptic operations
  double flops_ann = 0;      // dense MACs of one non-spiking pass
  double macs_executed = 0;  // dense MACs actually run in SNN mode (all steps)
};

/// Number of (output, tap) pairs each input position along one axis feeds.
std::vector<Index> fanout_along_axis(Index in, Index k, Index stride, Index padding);

/// Collects layer activity during one or more forward passes. Counts are kept
/// as totals and normalized by the number of samples on read.
class ActivityRecorder {
 public:
  /// `samples`: batch size of the passes being recorded.
  explicit ActivityRecorder(Index samples, bool enforce_purity = true);

  /// `input`: [samples * executions, C, H, W]. `executions` is how many times
  /// the layer runs per sample (T for per-step layers, 1 otherwise).
  template <typename Scalar>
  void conv(const std::string& name, const BasicTensor<Scalar>& input, const ConvGeometry& geom, bool spiking,
            Index executions);

  /// `input`: [..., in_features], rows = samples * executions.
  template <typename Scalar>
  void linear(const std::string& name, const BasicTensor<Scalar>& input, Index out_features, bool spiking,
              Index executions);

  /// Associative merge of another recorder's totals.
  void merge(const ActivityRecorder& other);

  std::vector<LayerActivity> activities() const;
  Index samples() const { return samples_; }

 private:
  void add(const std::string& name, bool spiking, double spikes, double sops, double dense_total,
           Index executions);

  struct Totals {
    std::string layer;
    bool spiking = true;
    double spikes = 0;
    double sops = 0;
    double dense = 0;  // dense MACs over all recorded executions
    double passes = 0; // samples * executions
  };

  Index samples_;
  bool enforce_purity_;
  std::vector<Totals> totals_;
};

struct LayerEnergy {
  LayerActivity activity;
  double ec_snn_pj = 0;
  double ec_ann_pj = 0;
};

struct EnergyReport {
  std::vector<LayerEnergy> layers;
  double ec_snn_pj = 0;
  double ec_ann_pj = 0;
  double reduction = 0;  // 1 - ec_snn / ec_ann, 0 when ec_ann == 0
};

EnergyReport build_energy_report(const std::vector<LayerActivity>& activity, const EnergyConstants& constants = {});
double reduction_ratio(const EnergyReport& report);

/// {layers: [...], ec_snn_pj, ec_ann_pj, reduction}
std::string to_json(const EnergyReport& report);

/// Runs one instrumented forward pass of `model` over a batch of `samples`.
template <typename Model, typename Input>
std::vector<LayerActivity> measure_activity(Model& model, const Input& inputs, Index samples) {
  ActivityRecorder recorder(samples);
  model.forward(inputs, &recorder);
  return recorder.activities();
}

}  // namespace spikegate
