#pragma once

// Run configuration as flat "key = value" text with '#' comments.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikegate/blocks.hpp"
#include "spikegate/lif.hpp"

namespace spikegate {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Task { classify, detect };
enum class Coding { direct, csgc };
enum class DataSource { synthetic, cifar10 };

const char* to_string(Task t);
const char* to_string(Coding c);
const char* to_string(DataSource d);

struct RunConfig {
  Task task = Task::classify;
  Coding coding = Coding::csgc;
  bool channel_attention = true;
  bool spatial_attention = true;
  BlockKind block = BlockKind::regular;
  std::vector<Index> widths{8, 16, 32};

  int time_steps = 4;
  double u_th = 0.75;
  double tau = 0.5;

  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  /// Global gradient-norm ceiling per step; 0 disables clipping.
  double grad_clip = 5.0;
  /// Empty means the default schedule scaled to `epochs`.
  std::vector<int> decay_epochs;
  bool flip = false;
  std::uint64_t seed = 1;

  DataSource data = DataSource::synthetic;
  std::string data_dir;
  int samples = 5000;
  int eval_samples = 1000;
  int image_size = 16;
  int classes = 10;

  int scenes = 64;
  double down_ratio = 4;
  double score_thresh = 0.25;
  int max_dets = 50;

  /// Throws ConfigError on a broken invariant.
  void validate() const;

  /// Decay epochs actually used: the configured list, or round(E*47/172)
  /// and round(E*90/172).
  std::vector<int> effective_decay_epochs() const;

  LifParams lif() const;

  bool operator==(const RunConfig&) const = default;
};

std::string serialize_config(const RunConfig& cfg);

/// Applies every "key = value" line of `text` on top of `base`.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Sets a single field from its textual form.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace spikegate
