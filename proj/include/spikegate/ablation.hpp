#pragma once

// Grids of training runs varying one mechanism at a time.

#include <string>
#include <vector>

#include "spikegate/train.hpp"

namespace spikegate {

enum class AblationPreset { thresholds, attention, timesteps, coding };

const char* to_string(AblationPreset p);
/// Throws std::invalid_argument for an unknown name.
AblationPreset parse_preset(const std::string& name);

struct AblationRun {
  std::string name;
  RunConfig config;
};

/// thresholds: u_th in {0.25, 0.5, 0.75, 1.0}
/// attention:  {none, CA, SA, CA+SA} x T in {4, 6, 8}; "none" is direct coding
/// timesteps:  T in {2, 4, 6, 8}
/// coding:     {direct, csgc}
std::vector<AblationRun> ablation_grid(AblationPreset preset, const RunConfig& base);

struct AblationRow {
  std::string name;
  RunConfig config;
  double final_loss = 0;
  double train_metric = 0;
  double eval_metric = 0;  // held-out accuracy; 0 without held-out data
  double energy_reduction = 0;
  double seconds = 0;
};

struct AblationTable {
  AblationPreset preset = AblationPreset::coding;
  std::vector<AblationRow> rows;
};

/// Trains every configuration of the grid on `train` and scores it on `held_out`
/// (which may be empty).
AblationTable run_ablation(AblationPreset preset, const RunConfig& base, const ClassificationData& train,
                           const ClassificationData& held_out, const TrainOptions& options = {});

/// name,coding,ca,sa,time_steps,u_th,final_loss,train_metric,eval_metric,energy_reduction
std::string ablation_csv(const AblationTable& table);
std::string ablation_json(const AblationTable& table);

/// For the coding preset: "csgc vs direct: +x.xx points held-out accuracy".
std::string coding_direction(const AblationTable& table);

}  // namespace spikegate
