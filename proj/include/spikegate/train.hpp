#pragma once

// SGD with momentum, step learning-rate decay, per-epoch metrics.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "spikegate/config.hpp"
#include "spikegate/datasets.hpp"
#include "spikegate/energy.hpp"
#include "spikegate/eval.hpp"
#include "spikegate/model.hpp"

namespace spikegate {

class SgdMomentum {
 public:
  SgdMomentum(std::vector<NamedTensor> params, double lr, double momentum, double weight_decay = 0.0,
              double grad_clip = 0.0);

  /// v = momentum * v + (g + wd * p); p -= lr * v. Parameters without a
  /// gradient are left alone. With grad_clip > 0 the gradients are first
  /// rescaled so their joint L2 norm does not exceed it.
  void step();
  void zero_grad();
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<Tensor::Vector> velocity_;
  double lr_, momentum_, weight_decay_, grad_clip_;
};

/// base / 10 for every decay epoch already reached (epochs counted from 0).
double learning_rate_at(double base, const std::vector<int>& decay_epochs, int epoch);

struct EpochMetrics {
  int epoch = 0;
  double loss = 0;
  double metric = 0;  // train accuracy, or AP when detecting
  double seconds = 0;
  double learning_rate = 0;
  double ec_snn_pj = 0;
  double ec_ann_pj = 0;
  double energy_reduction = 0;
};

class MetricsLog {
 public:
  /// Epochs must arrive as 1, 2, 3, ...
  void append(const EpochMetrics& m);
  const std::vector<EpochMetrics>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  const EpochMetrics& last() const { return entries_.back(); }

  /// epoch,loss,metric,seconds
  std::string to_csv(bool with_seconds = true) const;

 private:
  std::vector<EpochMetrics> entries_;
};

struct TrainOptions {
  /// Where a diagnostic dump goes if the loss stops being finite.
  std::filesystem::path dump_dir;
  bool energy_snapshots = true;
  Index energy_samples = 16;
  /// Called after every epoch.
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  MetricsLog log;
  SpikeNet model;
  EnergyReport energy;
};

/// Mean over a forward pass of up to `samples` inputs.
EnergyReport measure_energy(const SpikeNet& model, const Tensor& inputs);

double evaluate_accuracy(const SpikeNet& model, const ClassificationData& data, Index batch_size = 128);

/// Throws NumericError (after writing the offending batch to
/// options.dump_dir) when the loss or any activation is not finite.
TrainResult train_classifier(const RunConfig& cfg, const ClassificationData& data, const TrainOptions& options = {});

/// Detection metric: AP (BEV, IoU 0.5, moderate) over the training scenes.
TrainResult train_detector(const RunConfig& cfg, const std::vector<SyntheticScene>& scenes,
                           const TrainOptions& options = {});

/// Difficulty rules with box heights scaled to the scene image height.
DifficultyRules scene_rules(const std::vector<SyntheticScene>& scenes);

/// Runs the detector over every scene and pairs its output with the labels.
std::vector<ImageEval> detect_scenes(const SpikeNet& model, const std::vector<SyntheticScene>& scenes,
                                     const RunConfig& cfg, Index batch_size = 16);

/// Classification data for a config (synthetic or CIFAR-10).
ClassificationData load_classification_data(const RunConfig& cfg);

/// eval_samples further draws from the same synthetic task, or the CIFAR-10
/// test batch. Empty when eval_samples is 0.
ClassificationData load_held_out_data(const RunConfig& cfg);

std::string training_report_json(const RunConfig& cfg, const TrainResult& result);

}  // namespace spikegate
