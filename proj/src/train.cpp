#include "spikegate/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "spikegate/detect.hpp"
#include "spikegate/errors.hpp"
#include "spikegate/kitti.hpp"
#include "spikegate/ops.hpp"

namespace spikegate {

SgdMomentum::SgdMomentum(std::vector<NamedTensor> params, double lr, double momentum, double weight_decay,
                         double grad_clip)
    : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay), grad_clip_(grad_clip) {
  for (const auto& p : params_) velocity_.push_back(Tensor::Vector::Zero(p.tensor.numel()));
}

void SgdMomentum::step() {
  const auto lr = static_cast<float>(lr_), mu = static_cast<float>(momentum_), wd = static_cast<float>(weight_decay_);
  float scale = 1.0f;
  if (grad_clip_ > 0) {
    double sq = 0;
    for (const auto& p : params_) {
      if (p.tensor.has_grad()) sq += p.tensor.grad().template cast<double>().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > grad_clip_) scale = static_cast<float>(grad_clip_ / norm);
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    Tensor::Vector& v = velocity_[i];
    if (wd != 0.0f) {
      v = mu * v + scale * p.grad() + wd * p.values();
    } else {
      v = mu * v + scale * p.grad();
    }
    p.mutable_values() -= lr * v;
  }
}

void SgdMomentum::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double learning_rate_at(double base, const std::vector<int>& decay_epochs, int epoch) {
  double lr = base;
  for (int d : decay_epochs) {
    if (epoch >= d) lr /= 10.0;
  }
  return lr;
}

void MetricsLog::append(const EpochMetrics& m) {
  const int expected = entries_.empty() ? 1 : entries_.back().epoch + 1;
  if (m.epoch != expected) {
    throw std::invalid_argument("metrics log expects epoch " + std::to_string(expected) + ", got " +
                                std::to_string(m.epoch));
  }
  entries_.push_back(m);
}

std::string MetricsLog::to_csv(bool with_seconds) const {
  std::ostringstream o;
  o << (with_seconds ? "epoch,loss,metric,seconds\n" : "epoch,loss,metric\n");
  for (const auto& e : entries_) {
    o << e.epoch << ',' << format_number(e.loss) << ',' << format_number(e.metric);
    if (with_seconds) o << ',' << format_number(e.seconds);
    o << '\n';
  }
  return o.str();
}

EnergyReport measure_energy(const SpikeNet& model, const Tensor& inputs) {
  ActivityRecorder recorder(inputs.dim(0));
  model.forward(inputs, &recorder);
  return build_energy_report(recorder.activities());
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<Index> iota_indices(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

std::vector<Index> slice(const std::vector<Index>& v, std::size_t begin, std::size_t end) {
  return {v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const Index b = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(b));
  for (Index i = 0; i < b; ++i) {
    Index best = 0;
    for (Index j = 1; j < k; ++j) {
      if (logits.values()[i * k + j] > logits.values()[i * k + best]) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

[[noreturn]] void dump_and_abort(const TrainOptions& options, const std::string& what, int epoch, std::size_t batch,
                                 const Tensor& inputs, const std::vector<Index>& indices) {
  std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch);
  if (!options.dump_dir.empty()) {
    std::filesystem::create_directories(options.dump_dir);
    Tensor::Vector idx(static_cast<Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) idx[static_cast<Index>(i)] = static_cast<float>(indices[i]);
    write_checkpoint(options.dump_dir / "nan_batch.sgk",
                     {{"inputs", inputs}, {"sample_indices", Tensor({static_cast<Index>(indices.size())}, idx)}});
    std::ofstream txt(options.dump_dir / "nan_batch.txt");
    txt << "error: " << what << "\n" << where << "\nsamples:";
    for (Index i : indices) txt << ' ' << i;
    const auto& v = inputs.values();
    txt << "\ninput min " << v.minCoeff() << " max " << v.maxCoeff() << " non-finite "
        << (v.array().isFinite() == false).count() << "\n";
    where += ", dump in " + options.dump_dir.string();
  }
  throw NumericError("training aborted at " + where + ": " + what);
}

void finish_epoch(MetricsLog& log, EpochMetrics m, const SpikeNet& model, const Tensor& energy_inputs,
                  const TrainOptions& options, Clock::time_point start) {
  if (options.energy_snapshots) {
    const EnergyReport r = measure_energy(model, energy_inputs);
    m.ec_snn_pj = r.ec_snn_pj;
    m.ec_ann_pj = r.ec_ann_pj;
    m.energy_reduction = r.reduction;
  }
  m.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  log.append(m);
  if (options.on_epoch) options.on_epoch(m);
}

}  // namespace

double evaluate_accuracy(const SpikeNet& model, const ClassificationData& data, Index batch_size) {
  const auto all = iota_indices(data.size());
  Index correct = 0;
  for (std::size_t b = 0; b < all.size(); b += static_cast<std::size_t>(batch_size)) {
    const auto idx = slice(all, b, std::min(all.size(), b + static_cast<std::size_t>(batch_size)));
    const auto pred = argmax_rows(model.forward(data.batch(idx)).logits);
    const auto labels = data.batch_labels(idx);
    for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == labels[i];
  }
  return data.size() > 0 ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
}

TrainResult train_classifier(const RunConfig& cfg, const ClassificationData& data, const TrainOptions& options) {
  cfg.validate();
  if (data.size() < 1) throw std::invalid_argument("train_classifier: empty data set");
  Rng rng(cfg.seed);
  const ModelSpec spec = model_spec(cfg, data.channels, data.height, data.width, cfg.classes);
  TrainResult result{MetricsLog{}, SpikeNet::init(spec, rng), EnergyReport{}};
  SgdMomentum opt(result.model.named_parameters(), cfg.learning_rate, cfg.momentum, cfg.weight_decay,
                  cfg.grad_clip);
  const auto decay = cfg.effective_decay_epochs();
  auto order = iota_indices(data.size());
  const Tensor energy_inputs = data.batch(slice(order, 0, std::min<std::size_t>(order.size(), options.energy_samples)));
  std::bernoulli_distribution coin(0.5);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = Clock::now();
    opt.set_learning_rate(learning_rate_at(cfg.learning_rate, decay, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    Index correct = 0;
    std::size_t batch_no = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
      const auto idx = slice(order, b, std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size)));
      std::vector<bool> flips(idx.size(), false);
      if (cfg.flip) {
        for (std::size_t i = 0; i < flips.size(); ++i) flips[i] = coin(rng);
      }
      const Tensor x = data.batch(idx, &flips);
      const auto labels = data.batch_labels(idx);
      Tape tape;
      TapeScope scope(tape);
      ModelOutput out;
      Tensor loss;
      try {
        out = result.model.forward(x);
        loss = softmax_cross_entropy(out.logits, labels);
      } catch (const NumericError& e) {
        dump_and_abort(options, e.what(), epoch + 1, batch_no, x, idx);
      }
      const double l = loss.item();
      if (!std::isfinite(l)) dump_and_abort(options, "loss is not finite", epoch + 1, batch_no, x, idx);
      opt.zero_grad();
      backward(tape, loss);
      opt.step();
      loss_sum += l * static_cast<double>(idx.size());
      const auto pred = argmax_rows(out.logits);
      for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == labels[i];
    }
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.loss = loss_sum / static_cast<double>(order.size());
    m.metric = static_cast<double>(correct) / static_cast<double>(order.size());
    m.learning_rate = opt.learning_rate();
    finish_epoch(result.log, m, result.model, energy_inputs, options, start);
  }
  result.energy = measure_energy(result.model, energy_inputs);
  return result;
}

DifficultyRules scene_rules(const std::vector<SyntheticScene>& scenes) {
  const double h = scenes.empty() ? 375.0 : static_cast<double>(scenes.front().calib.height);
  return DifficultyRules{}.scaled_heights(h / 375.0);
}

std::vector<ImageEval> detect_scenes(const SpikeNet& model, const std::vector<SyntheticScene>& scenes,
                                     const RunConfig& cfg, Index batch_size) {
  std::vector<ImageEval> out;
  const auto all = iota_indices(static_cast<Index>(scenes.size()));
  for (std::size_t b = 0; b < all.size(); b += static_cast<std::size_t>(batch_size)) {
    const auto idx = slice(all, b, std::min(all.size(), b + static_cast<std::size_t>(batch_size)));
    const ModelOutput o = model.forward(scene_batch(scenes, idx));
    std::vector<CameraCalib> calibs;
    for (Index i : idx) calibs.push_back(scenes[static_cast<std::size_t>(i)].calib);
    const auto dets = decode_detections(sigmoid(o.heat_logits), o.regression, calibs, Priors{}, cfg.down_ratio,
                                        cfg.score_thresh, static_cast<std::size_t>(cfg.max_dets));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ImageEval e;
      e.gts = scenes[static_cast<std::size_t>(idx[i])].labels;
      for (const auto& d : dets[i]) e.dets.push_back(to_kitti(d, true));
      out.push_back(std::move(e));
    }
  }
  return out;
}

TrainResult train_detector(const RunConfig& cfg, const std::vector<SyntheticScene>& scenes,
                           const TrainOptions& options) {
  cfg.validate();
  if (scenes.empty()) throw std::invalid_argument("train_detector: no scenes");
  Rng rng(cfg.seed);
  const Index h = scenes.front().calib.height, w = scenes.front().calib.width;
  const ModelSpec spec = model_spec(cfg, 3, h, w, 1);
  if (static_cast<double>(h) / static_cast<double>(spec.out_h()) != cfg.down_ratio) {
    throw ConfigError("down_ratio " + format_number(cfg.down_ratio) + " does not match the network output stride");
  }
  TrainResult result{MetricsLog{}, SpikeNet::init(spec, rng), EnergyReport{}};
  SgdMomentum opt(result.model.named_parameters(), cfg.learning_rate, cfg.momentum, cfg.weight_decay,
                  cfg.grad_clip);
  const auto decay = cfg.effective_decay_epochs();
  auto order = iota_indices(static_cast<Index>(scenes.size()));
  const Tensor energy_inputs =
      scene_batch(scenes, slice(order, 0, std::min<std::size_t>(order.size(), options.energy_samples)));
  MatchConfig match{0.5, IouMode::bev, Difficulty::moderate, "Car", scene_rules(scenes)};

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = Clock::now();
    opt.set_learning_rate(learning_rate_at(cfg.learning_rate, decay, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batch_no = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
      const auto idx = slice(order, b, std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size)));
      const Tensor x = scene_batch(scenes, idx);
      std::vector<std::vector<Detection3D>> boxes;
      std::vector<CameraCalib> calibs;
      for (Index i : idx) {
        boxes.push_back(scenes[static_cast<std::size_t>(i)].boxes);
        calibs.push_back(scenes[static_cast<std::size_t>(i)].calib);
      }
      const auto targets = build_targets(boxes, calibs, 1, spec.out_h(), spec.out_w(), Priors{}, cfg.down_ratio);
      Tape tape;
      TapeScope scope(tape);
      Tensor loss;
      try {
        const ModelOutput out = result.model.forward(x);
        loss = detection_loss(out.heat_logits, out.regression, targets);
      } catch (const NumericError& e) {
        dump_and_abort(options, e.what(), epoch + 1, batch_no, x, idx);
      }
      const double l = loss.item();
      if (!std::isfinite(l)) dump_and_abort(options, "loss is not finite", epoch + 1, batch_no, x, idx);
      opt.zero_grad();
      backward(tape, loss);
      opt.step();
      loss_sum += l * static_cast<double>(idx.size());
    }
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.loss = loss_sum / static_cast<double>(order.size());
    m.metric = ap_r11(match_and_pr(detect_scenes(result.model, scenes, cfg), match));
    m.learning_rate = opt.learning_rate();
    finish_epoch(result.log, m, result.model, energy_inputs, options, start);
  }
  result.energy = measure_energy(result.model, energy_inputs);
  return result;
}

ClassificationData load_classification_data(const RunConfig& cfg) {
  if (cfg.data == DataSource::synthetic) {
    return make_synthetic_classification(cfg.samples, cfg.seed + 0x5eed, cfg.classes, cfg.image_size);
  }
  ClassificationData d = load_cifar10(cfg.data_dir, true);
  return cfg.samples < d.size() ? d.subset(0, cfg.samples) : d;
}

ClassificationData load_held_out_data(const RunConfig& cfg) {
  if (cfg.eval_samples == 0) return {};
  if (cfg.data == DataSource::synthetic) {
    // Samples are drawn in sequence after the class templates, so the first
    // `samples` of the longer draw are exactly the training set.
    const auto all = make_synthetic_classification(cfg.samples + cfg.eval_samples, cfg.seed + 0x5eed, cfg.classes,
                                                   cfg.image_size);
    return all.subset(cfg.samples, all.size());
  }
  ClassificationData d = load_cifar10(cfg.data_dir, false);
  return cfg.eval_samples < d.size() ? d.subset(0, cfg.eval_samples) : d;
}

std::string training_report_json(const RunConfig& cfg, const TrainResult& result) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json c;
  std::istringstream lines(serialize_config(cfg));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) c[line.substr(0, eq)] = line.substr(eq + 3);
  }
  j["config"] = c;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : result.log.entries()) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"loss", e.loss},
                           {"metric", e.metric},
                           {"learning_rate", e.learning_rate},
                           {"ec_snn_pj", e.ec_snn_pj},
                           {"ec_ann_pj", e.ec_ann_pj},
                           {"reduction", e.energy_reduction}});
  }
  if (!result.log.empty()) {
    j["final"] = {{"loss", result.log.last().loss}, {"metric", result.log.last().metric}};
  }
  j["energy"] = nlohmann::ordered_json::parse(to_json(result.energy));
  return j.dump(2) + "\n";
}

}  // namespace spikegate
