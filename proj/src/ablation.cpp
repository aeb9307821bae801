#include "spikegate/ablation.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "spikegate/kitti.hpp"

namespace spikegate {

const char* to_string(AblationPreset p) {
  switch (p) {
    case AblationPreset::thresholds: return "thresholds";
    case AblationPreset::attention: return "attention";
    case AblationPreset::timesteps: return "timesteps";
    case AblationPreset::coding: return "coding";
  }
  return "?";
}

AblationPreset parse_preset(const std::string& name) {
  for (auto p : {AblationPreset::thresholds, AblationPreset::attention, AblationPreset::timesteps,
                 AblationPreset::coding}) {
    if (name == to_string(p)) return p;
  }
  throw std::invalid_argument("unknown ablation preset '" + name + "'");
}

namespace {

RunConfig with_attention(RunConfig c, bool ca, bool sa) {
  c.coding = (ca || sa) ? Coding::csgc : Coding::direct;
  c.channel_attention = ca;
  c.spatial_attention = sa;
  return c;
}

std::string attention_label(const RunConfig& c) {
  if (c.coding == Coding::direct) return "none";
  if (c.channel_attention && c.spatial_attention) return "CA+SA";
  return c.channel_attention ? "CA" : "SA";
}

}  // namespace

std::vector<AblationRun> ablation_grid(AblationPreset preset, const RunConfig& base) {
  std::vector<AblationRun> runs;
  switch (preset) {
    case AblationPreset::thresholds:
      for (double v : {0.25, 0.5, 0.75, 1.0}) {
        RunConfig c = base;
        c.u_th = v;
        runs.push_back({"vth=" + format_number(v), c});
      }
      break;
    case AblationPreset::attention:
      for (int t : {4, 6, 8}) {
        for (auto [ca, sa] : {std::pair{false, false}, std::pair{true, false}, std::pair{false, true},
                              std::pair{true, true}}) {
          RunConfig c = with_attention(base, ca, sa);
          c.time_steps = t;
          runs.push_back({attention_label(c) + ",T=" + std::to_string(t), c});
        }
      }
      break;
    case AblationPreset::timesteps:
      for (int t : {2, 4, 6, 8}) {
        RunConfig c = base;
        c.time_steps = t;
        runs.push_back({"T=" + std::to_string(t), c});
      }
      break;
    case AblationPreset::coding: {
      RunConfig direct = base;
      direct.coding = Coding::direct;
      RunConfig csgc = with_attention(base, true, true);
      runs.push_back({"direct", direct});
      runs.push_back({"csgc", csgc});
      break;
    }
  }
  return runs;
}

AblationTable run_ablation(AblationPreset preset, const RunConfig& base, const ClassificationData& train,
                           const ClassificationData& held_out, const TrainOptions& options) {
  AblationTable table;
  table.preset = preset;
  for (const AblationRun& run : ablation_grid(preset, base)) {
    TrainResult r = train_classifier(run.config, train, options);
    AblationRow row;
    row.name = run.name;
    row.config = run.config;
    if (!r.log.empty()) {
      row.final_loss = r.log.last().loss;
      row.train_metric = r.log.last().metric;
      for (const auto& e : r.log.entries()) row.seconds += e.seconds;
    }
    row.eval_metric = held_out.size() > 0 ? evaluate_accuracy(r.model, held_out) : 0.0;
    row.energy_reduction = r.energy.reduction;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string ablation_csv(const AblationTable& table) {
  std::ostringstream o;
  o << "name,coding,ca,sa,time_steps,u_th,final_loss,train_metric,eval_metric,energy_reduction\n";
  for (const auto& r : table.rows) {
    const RunConfig& c = r.config;
    const bool csgc = c.coding == Coding::csgc;
    o << '"' << r.name << "\"," << to_string(c.coding) << ',' << (csgc && c.channel_attention) << ','
      << (csgc && c.spatial_attention) << ',' << c.time_steps << ',' << format_number(c.u_th) << ','
      << format_number(r.final_loss) << ',' << format_number(r.train_metric) << ',' << format_number(r.eval_metric)
      << ',' << format_number(r.energy_reduction) << '\n';
  }
  return o.str();
}

std::string ablation_json(const AblationTable& table) {
  nlohmann::ordered_json j;
  j["preset"] = to_string(table.preset);
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) {
    const RunConfig& c = r.config;
    const bool csgc = c.coding == Coding::csgc;
    j["rows"].push_back({{"name", r.name},
                         {"coding", to_string(c.coding)},
                         {"channel_attention", csgc && c.channel_attention},
                         {"spatial_attention", csgc && c.spatial_attention},
                         {"time_steps", c.time_steps},
                         {"u_th", c.u_th},
                         {"final_loss", r.final_loss},
                         {"train_metric", r.train_metric},
                         {"eval_metric", r.eval_metric},
                         {"energy_reduction", r.energy_reduction}});
  }
  if (table.preset == AblationPreset::coding) j["direction"] = coding_direction(table);
  return j.dump(2) + "\n";
}

std::string coding_direction(const AblationTable& table) {
  const AblationRow* direct = nullptr;
  const AblationRow* csgc = nullptr;
  for (const auto& r : table.rows) {
    if (r.name == "direct") direct = &r;
    if (r.name == "csgc") csgc = &r;
  }
  if (!direct || !csgc) return "incomplete";
  const double delta = 100.0 * (csgc->eval_metric - direct->eval_metric);
  char buf[96];
  std::snprintf(buf, sizeof buf, "csgc vs direct: %+.2f points held-out accuracy", delta);
  return buf;
}

}  // namespace spikegate
