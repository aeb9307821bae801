#include "spikegate/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "spikegate/kitti.hpp"

namespace spikegate {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<T>(key, item));
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

const char* to_string(Task t) { return t == Task::classify ? "classify" : "detect"; }
const char* to_string(Coding c) { return c == Coding::direct ? "direct" : "csgc"; }
const char* to_string(DataSource d) { return d == DataSource::synthetic ? "synthetic" : "cifar10"; }

void RunConfig::validate() const {
  if (time_steps < 1 || time_steps > 16) throw ConfigError("time_steps must lie in 1..16");
  if (!(u_th > 0 && u_th <= 2)) throw ConfigError("u_th must lie in (0, 2]");
  if (!(tau > 0 && tau <= 1)) throw ConfigError("tau must lie in (0, 1]");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (!(grad_clip >= 0)) throw ConfigError("grad_clip must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (widths.size() != 3) throw ConfigError("widths needs exactly three stage widths");
  for (Index w : widths) {
    if (w < 1) throw ConfigError("stage widths must be >= 1");
  }
  if (samples < 1 || eval_samples < 0) throw ConfigError("samples must be >= 1");
  if (image_size < 4) throw ConfigError("image_size must be >= 4");
  if (classes < 2) throw ConfigError("classes must be >= 2");
  if (scenes < 1) throw ConfigError("scenes must be >= 1");
  if (!(down_ratio > 0)) throw ConfigError("down_ratio must be > 0");
  if (!(score_thresh >= 0 && score_thresh <= 1)) throw ConfigError("score_thresh must lie in [0, 1]");
  if (max_dets < 1) throw ConfigError("max_dets must be >= 1");
  if (data == DataSource::cifar10 && data_dir.empty()) throw ConfigError("data = cifar10 needs data_dir");
}

std::vector<int> RunConfig::effective_decay_epochs() const {
  if (!decay_epochs.empty()) return decay_epochs;
  return {static_cast<int>(std::lround(epochs * 47.0 / 172.0)), static_cast<int>(std::lround(epochs * 90.0 / 172.0))};
}

LifParams RunConfig::lif() const {
  LifParams p;
  p.tau = tau;
  p.u_th = u_th;
  return p;
}

void apply_config_value(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "task") {
    if (v == "classify") c.task = Task::classify;
    else if (v == "detect") c.task = Task::detect;
    else throw ConfigError("task must be classify or detect");
  } else if (key == "coding") {
    if (v == "direct") c.coding = Coding::direct;
    else if (v == "csgc") c.coding = Coding::csgc;
    else throw ConfigError("coding must be direct or csgc");
  } else if (key == "channel_attention") {
    c.channel_attention = parse_bool(key, v);
  } else if (key == "spatial_attention") {
    c.spatial_attention = parse_bool(key, v);
  } else if (key == "block") {
    try {
      c.block = parse_block_kind(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "widths") {
    c.widths = parse_list<Index>(key, v);
  } else if (key == "time_steps") {
    c.time_steps = parse_number<int>(key, v);
  } else if (key == "u_th") {
    c.u_th = parse_number<double>(key, v);
  } else if (key == "tau") {
    c.tau = parse_number<double>(key, v);
  } else if (key == "epochs") {
    c.epochs = parse_number<int>(key, v);
  } else if (key == "batch_size") {
    c.batch_size = parse_number<int>(key, v);
  } else if (key == "learning_rate") {
    c.learning_rate = parse_number<double>(key, v);
  } else if (key == "momentum") {
    c.momentum = parse_number<double>(key, v);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_number<double>(key, v);
  } else if (key == "grad_clip") {
    c.grad_clip = parse_number<double>(key, v);
  } else if (key == "decay_epochs") {
    c.decay_epochs = parse_list<int>(key, v);
  } else if (key == "flip") {
    c.flip = parse_bool(key, v);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, v);
  } else if (key == "data") {
    if (v == "synthetic") c.data = DataSource::synthetic;
    else if (v == "cifar10") c.data = DataSource::cifar10;
    else throw ConfigError("data must be synthetic or cifar10");
  } else if (key == "data_dir") {
    c.data_dir = v;
  } else if (key == "samples") {
    c.samples = parse_number<int>(key, v);
  } else if (key == "eval_samples") {
    c.eval_samples = parse_number<int>(key, v);
  } else if (key == "image_size") {
    c.image_size = parse_number<int>(key, v);
  } else if (key == "classes") {
    c.classes = parse_number<int>(key, v);
  } else if (key == "scenes") {
    c.scenes = parse_number<int>(key, v);
  } else if (key == "down_ratio") {
    c.down_ratio = parse_number<double>(key, v);
  } else if (key == "score_thresh") {
    c.score_thresh = parse_number<double>(key, v);
  } else if (key == "max_dets") {
    c.max_dets = parse_number<int>(key, v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "task = " << to_string(c.task) << '\n'
    << "coding = " << to_string(c.coding) << '\n'
    << "channel_attention = " << b(c.channel_attention) << '\n'
    << "spatial_attention = " << b(c.spatial_attention) << '\n'
    << "block = " << to_string(c.block) << '\n'
    << "widths = " << join(c.widths) << '\n'
    << "time_steps = " << c.time_steps << '\n'
    << "u_th = " << format_number(c.u_th) << '\n'
    << "tau = " << format_number(c.tau) << '\n'
    << "epochs = " << c.epochs << '\n'
    << "batch_size = " << c.batch_size << '\n'
    << "learning_rate = " << format_number(c.learning_rate) << '\n'
    << "momentum = " << format_number(c.momentum) << '\n'
    << "weight_decay = " << format_number(c.weight_decay) << '\n'
    << "grad_clip = " << format_number(c.grad_clip) << '\n'
    << "decay_epochs = " << join(c.decay_epochs) << '\n'
    << "flip = " << b(c.flip) << '\n'
    << "seed = " << c.seed << '\n'
    << "data = " << to_string(c.data) << '\n'
    << "data_dir = " << c.data_dir << '\n'
    << "samples = " << c.samples << '\n'
    << "eval_samples = " << c.eval_samples << '\n'
    << "image_size = " << c.image_size << '\n'
    << "classes = " << c.classes << '\n'
    << "scenes = " << c.scenes << '\n'
    << "down_ratio = " << format_number(c.down_ratio) << '\n'
    << "score_thresh = " << format_number(c.score_thresh) << '\n'
    << "max_dets = " << c.max_dets << '\n';
  return o.str();
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": missing '='");
    try {
      apply_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace spikegate
