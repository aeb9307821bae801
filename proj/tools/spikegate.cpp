// spikegate command-line driver.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "spikegate/ablation.hpp"
#include "spikegate/cost.hpp"
#include "spikegate/errors.hpp"
#include "spikegate/eval.hpp"
#include "spikegate/kitti.hpp"
#include "spikegate/plots.hpp"
#include "spikegate/train.hpp"

namespace fs = std::filesystem;
using namespace spikegate;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool single_thread = false;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key = value configuration file");
  app->add_option("--seed", c.seed, "random seed (overrides the config)");
  app->add_option("--out", c.out, "output directory");
  app->add_flag("--single-thread", c.single_thread, "run on one thread");
  app->add_option("--set", c.overrides, "extra key=value overrides")->take_all();
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  if (c.single_thread) Eigen::setNbThreads(1);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write " + path.string());
  f << text;
}

TrainOptions progress_options(const fs::path& out) {
  TrainOptions o;
  o.dump_dir = out;
  o.on_epoch = [](const EpochMetrics& m) {
    std::printf("epoch %3d  loss %.5f  metric %.4f  lr %.3g  %.1fs\n", m.epoch, m.loss, m.metric, m.learning_rate,
                m.seconds);
    std::fflush(stdout);
  };
  return o;
}

int cmd_train(const Common& c) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = c.out;
  fs::create_directories(out);
  write_text(out / "config.txt", serialize_config(cfg));
  TrainResult r;
  if (cfg.task == Task::classify) {
    r = train_classifier(cfg, load_classification_data(cfg), progress_options(out));
  } else {
    r = train_detector(cfg, gen_synthetic_scenes(cfg.scenes, cfg.seed), progress_options(out));
  }
  write_text(out / "metrics.csv", r.log.to_csv());
  write_text(out / "report.json", training_report_json(cfg, r));
  write_checkpoint(out / "checkpoint.sgk", r.model.named_parameters());
  if (!r.log.empty()) emit_plots({{to_string(cfg.coding), r.log}}, out);
  std::printf("wrote %s\n", out.string().c_str());
  return kOk;
}

std::vector<ImageEval> load_eval_dirs(const fs::path& gt_dir, const fs::path& pred_dir) {
  if (!fs::is_directory(gt_dir)) throw FormatError("not a directory: " + gt_dir.string());
  if (!fs::is_directory(pred_dir)) throw FormatError("not a directory: " + pred_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.path().extension() == ".txt") files.push_back(e.path().filename());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImageEval> images;
  for (const auto& f : files) {
    ImageEval img;
    img.gts = read_kitti_labels(gt_dir / f);
    if (fs::exists(pred_dir / f)) img.dets = read_kitti_labels(pred_dir / f);
    images.push_back(std::move(img));
  }
  return images;
}

int cmd_eval(const Common& c, const std::string& gt, const std::string& pred, const std::string& category,
             double image_height, bool omit_zero) {
  if (c.single_thread) Eigen::setNbThreads(1);
  const auto images = load_eval_dirs(gt, pred);
  const auto rules = DifficultyRules{}.scaled_heights(image_height / 375.0);
  const auto entries = evaluate_all(images, category, rules, omit_zero ? RecallGrid::r11_no_zero : RecallGrid::r11);
  const fs::path out = c.out;
  fs::create_directories(out);
  write_text(out / "report.json", ap_report_json(entries));
  write_text(out / "pr_curves.csv", pr_curves_csv(entries));
  for (const auto& e : entries) {
    std::printf("%-3s IoU %.1f %-8s AP %.4f%s\n", to_string(e.mode), e.threshold, to_string(e.difficulty), e.ap,
                e.valid ? "" : "  (no ground truth)");
  }
  return kOk;
}

int cmd_energy(const Common& c, const std::string& checkpoint, int samples) {
  const RunConfig cfg = resolve_config(c);
  Rng rng(cfg.seed);
  Tensor inputs;
  ModelSpec spec;
  if (cfg.task == Task::classify) {
    RunConfig small = cfg;
    small.samples = samples;
    const auto data = load_classification_data(small);
    std::vector<Index> idx(static_cast<std::size_t>(std::min<Index>(samples, data.size())));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Index>(i);
    inputs = data.batch(idx);
    spec = model_spec(cfg, data.channels, data.height, data.width, cfg.classes);
  } else {
    const auto scenes = gen_synthetic_scenes(samples, cfg.seed);
    std::vector<Index> idx(scenes.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Index>(i);
    inputs = scene_batch(scenes, idx);
    spec = model_spec(cfg, 3, inputs.dim(2), inputs.dim(3), 1);
  }
  SpikeNet model = SpikeNet::init(spec, rng);
  if (!checkpoint.empty()) restore_parameters(model.named_parameters(), read_checkpoint(fs::path(checkpoint)));
  const EnergyReport report = measure_energy(model, inputs);
  const fs::path out = c.out;
  fs::create_directories(out);
  write_text(out / "energy.json", to_json(report));
  std::printf("EC_SNN %.6g pJ  EC_ANN %.6g pJ  reduction %.4f\n", report.ec_snn_pj, report.ec_ann_pj,
              report.reduction);
  return kOk;
}

int cmd_bench_blocks(const Common& c) {
  std::ostringstream csv;
  csv << "kind,c_in,c_out,k,stride,params,flops,ratio\n";
  const std::pair<Index, Index> channels[] = {{16, 8}, {32, 16}, {64, 32}, {128, 64}, {256, 128}, {32, 32}, {64, 64}};
  for (const auto& [ci, co] : channels) {
    const Index stride = ci == co ? 1 : 2;
    const BlockSpec base{BlockKind::regular, ci, co, 3, stride, 32, 32};
    const auto reg = count_regular(base);
    for (BlockKind kind : {BlockKind::regular, BlockKind::lightweight}) {
      const auto r = count_block(base.with_kind(kind));
      csv << to_string(kind) << ',' << ci << ',' << co << ",3," << stride << ',' << r.params() << ',' << r.flops()
          << ',' << format_number(static_cast<double>(r.params()) / static_cast<double>(reg.params())) << '\n';
    }
  }
  std::fputs(csv.str().c_str(), stdout);
  const fs::path out = c.out;
  fs::create_directories(out);
  write_text(out / "blocks.csv", csv.str());
  std::fprintf(stderr, "claimed closed form 1/(2Cin)+1/27 at Cin=64: %.4f (reported only)\n",
               claimed_ratio_form(64));
  return kOk;
}

int cmd_ablate(const Common& c, const std::string& preset_name) {
  const AblationPreset preset = parse_preset(preset_name);
  const RunConfig cfg = resolve_config(c);
  if (cfg.task != Task::classify) throw ConfigError("ablation presets run the classification task");
  const auto train = load_classification_data(cfg);
  const auto held_out = load_held_out_data(cfg);
  const fs::path out = c.out;
  fs::create_directories(out);
  const auto table = run_ablation(preset, cfg, train, held_out, progress_options(out));
  write_text(out / "ablation.csv", ablation_csv(table));
  write_text(out / "ablation.json", ablation_json(table));
  std::vector<std::string> labels;
  std::vector<double> values;
  for (const auto& r : table.rows) {
    labels.push_back(r.name);
    values.push_back(held_out.size() > 0 ? r.eval_metric : r.train_metric);
  }
  write_text(out / "ablation.svg", bar_chart_svg(std::string("ablation: ") + to_string(preset), labels, values));
  std::fputs(ablation_csv(table).c_str(), stdout);
  if (preset == AblationPreset::coding) std::printf("%s\n", coding_direction(table).c_str());
  return kOk;
}

int cmd_gen_data(const Common& c, int n) {
  const RunConfig cfg = resolve_config(c);
  const auto scenes = gen_synthetic_scenes(n, cfg.seed);
  write_scene_dataset(c.out, scenes);
  std::size_t boxes = 0;
  for (const auto& s : scenes) boxes += s.boxes.size();
  std::printf("wrote %d scenes with %zu boxes to %s\n", n, boxes, c.out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spiking 3D detection and classification toolkit"};
  app.require_subcommand(1);
  Common common;

  auto* train = app.add_subcommand("train", "train a classifier or detector");
  add_common(train, common);

  auto* eval = app.add_subcommand("eval", "score KITTI-format predictions");
  add_common(eval, common);
  std::string gt_dir, pred_dir, category = "Car";
  double image_height = 375.0;
  bool omit_zero = false;
  eval->add_option("--gt", gt_dir, "ground-truth label directory")->required();
  eval->add_option("--pred", pred_dir, "prediction label directory")->required();
  eval->add_option("--category", category, "object type to score");
  eval->add_option("--image-height", image_height, "image height used to scale difficulty limits");
  eval->add_flag("--omit-zero-recall", omit_zero, "average over recall 0.1..1.0 only");

  auto* energy = app.add_subcommand("energy", "SNN vs ANN energy estimate");
  add_common(energy, common);
  std::string checkpoint;
  int energy_samples = 16;
  energy->add_option("--checkpoint", checkpoint, "trained weights");
  energy->add_option("--samples", energy_samples, "inputs in the measured batch")->check(CLI::PositiveNumber);

  auto* bench = app.add_subcommand("bench", "cost tables");
  add_common(bench, common);
  std::string bench_what;
  bench->add_option("what", bench_what, "table to print")->required()->check(CLI::IsMember({"blocks"}));

  auto* ablate = app.add_subcommand("ablate", "run an ablation preset");
  add_common(ablate, common);
  std::string preset;
  ablate->add_option("--preset", preset, "thresholds | attention | timesteps | coding")
      ->required()
      ->check(CLI::IsMember({"thresholds", "attention", "timesteps", "coding"}));

  auto* gen = app.add_subcommand("gen-data", "write synthetic KITTI-format scenes");
  add_common(gen, common);
  int scene_count = 16;
  gen->add_option("--n", scene_count, "number of scenes")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(common);
    if (*eval) return cmd_eval(common, gt_dir, pred_dir, category, image_height, omit_zero);
    if (*energy) return cmd_energy(common, checkpoint, energy_samples);
    if (*bench) return cmd_bench_blocks(common);
    if (*ablate) return cmd_ablate(common, preset);
    if (*gen) return cmd_gen_data(common, scene_count);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
