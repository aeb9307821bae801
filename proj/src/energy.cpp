#include "spikegate/energy.hpp"

#include <json.hpp>

#include <stdexcept>

namespace spikegate {

double ec_snn(double sops, const EnergyConstants& constants) { return sops * constants.pj_per_sop; }

double ec_ann(double flops, const EnergyConstants& constants) { return flops * constants.pj_per_mac; }

double reduction_ratio(double ec_snn_pj, double ec_ann_pj) {
  if (!(ec_ann_pj > 0.0)) throw std::domain_error("reduction ratio undefined for zero ANN energy");
  return 1.0 - ec_snn_pj / ec_ann_pj;
}

double reduction_ratio(const EnergyReport& report) { return reduction_ratio(report.ec_snn_pj, report.ec_ann_pj); }

std::vector<Index> fanout_along_axis(Index in, Index k, Index stride, Index padding) {
  const Index out = (in + 2 * padding - k) / stride + 1;
  std::vector<Index> count(static_cast<std::size_t>(in), 0);
  for (Index o = 0; o < out; ++o) {
    for (Index t = 0; t < k; ++t) {
      const Index i = o * stride - padding + t;
      if (i >= 0 && i < in) ++count[static_cast<std::size_t>(i)];
    }
  }
  return count;
}

ActivityRecorder::ActivityRecorder(Index samples, bool enforce_purity)
    : samples_(samples), enforce_purity_(enforce_purity) {
  if (samples < 1) throw std::invalid_argument("ActivityRecorder needs at least one sample");
}

template <typename Scalar>
void ActivityRecorder::conv(const std::string& name, const BasicTensor<Scalar>& input, const ConvGeometry& geom,
                            bool spiking, Index executions) {
  if (input.rank() != 4 || input.dim(1) != geom.c_in) {
    throw ShapeError("recorder: layer " + name + " input " + to_string(input.shape()) + " does not match c_in " +
                     std::to_string(geom.c_in));
  }
  if (spiking && enforce_purity_ && !is_binary(input)) {
    throw SpikingPurityError("layer " + name + " received a non-binary input in spiking mode");
  }
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto fy = fanout_along_axis(h, geom.k, geom.stride, geom.padding);
  const auto fx = fanout_along_axis(w, geom.k, geom.stride, geom.padding);
  const double per_channel = geom.depthwise ? 1.0 : static_cast<double>(geom.c_out);

  double fy_sum = 0, fx_sum = 0;
  for (Index v : fy) fy_sum += static_cast<double>(v);
  for (Index v : fx) fx_sum += static_cast<double>(v);

  double spikes = 0;
  double sops = 0;
  const Scalar* data = input.values().data();
  for (Index b = 0; b < n * c; ++b) {
    const Scalar* plane = data + b * h * w;
    for (Index y = 0; y < h; ++y) {
      double row = 0;
      for (Index x = 0; x < w; ++x) {
        const double v = static_cast<double>(plane[y * w + x]);
        spikes += v;
        row += v * static_cast<double>(fx[static_cast<std::size_t>(x)]);
      }
      sops += row * static_cast<double>(fy[static_cast<std::size_t>(y)]);
    }
  }
  sops *= per_channel;
  const double dense_total = static_cast<double>(n) * static_cast<double>(c) * fy_sum * fx_sum * per_channel;
  add(name, spiking, spikes, sops, dense_total, executions);
}

template <typename Scalar>
void ActivityRecorder::linear(const std::string& name, const BasicTensor<Scalar>& input, Index out_features,
                              bool spiking, Index executions) {
  if (spiking && enforce_purity_ && !is_binary(input)) {
    throw SpikingPurityError("layer " + name + " received a non-binary input in spiking mode");
  }
  const double spikes = static_cast<double>(input.values().sum());
  const double fan = static_cast<double>(out_features);
  add(name, spiking, spikes, spikes * fan, static_cast<double>(input.numel()) * fan, executions);
}

void ActivityRecorder::add(const std::string& name, bool spiking, double spikes, double sops, double dense_total,
                           Index executions) {
  Totals* slot = nullptr;
  for (auto& t : totals_) {
    if (t.layer == name) slot = &t;
  }
  if (slot == nullptr) {
    totals_.push_back({name, spiking, 0, 0, 0, 0});
    slot = &totals_.back();
  }
  slot->spikes += spikes;
  slot->sops += sops;
  slot->dense += dense_total;
  slot->passes += static_cast<double>(samples_ * executions);
}

void ActivityRecorder::merge(const ActivityRecorder& other) {
  for (const auto& o : other.totals_) {
    Totals* slot = nullptr;
    for (auto& t : totals_) {
      if (t.layer == o.layer) slot = &t;
    }
    if (slot == nullptr) {
      totals_.push_back({o.layer, o.spiking, 0, 0, 0, 0});
      slot = &totals_.back();
    }
    slot->spikes += o.spikes;
    slot->sops += o.sops;
    slot->dense += o.dense;
    slot->passes += o.passes;
  }
  // Per-sample normalization uses passes; samples_ tracks the merged batch.
  samples_ += other.samples_;
}

std::vector<LayerActivity> ActivityRecorder::activities() const {
  std::vector<LayerActivity> out;
  const double s = static_cast<double>(samples_);
  for (const auto& t : totals_) {
    LayerActivity a;
    a.layer = t.layer;
    a.spiking = t.spiking;
    a.spike_count = t.spikes / s;
    a.sops = t.sops / s;
    a.macs_executed = t.dense / s;
    a.flops_ann = t.passes > 0 ? t.dense / t.passes : 0.0;
    out.push_back(a);
  }
  return out;
}

EnergyReport build_energy_report(const std::vector<LayerActivity>& activity, const EnergyConstants& constants) {
  EnergyReport r;
  for (const auto& a : activity) {
    LayerEnergy e;
    e.activity = a;
    e.ec_snn_pj = a.spiking ? ec_snn(a.sops, constants) : ec_ann(a.macs_executed, constants);
    e.ec_ann_pj = ec_ann(a.flops_ann, constants);
    r.ec_snn_pj += e.ec_snn_pj;
    r.ec_ann_pj += e.ec_ann_pj;
    r.layers.push_back(e);
  }
  r.reduction = r.ec_ann_pj > 0 ? reduction_ratio(r.ec_snn_pj, r.ec_ann_pj) : 0.0;
  return r;
}

std::string to_json(const EnergyReport& report) {
  nlohmann::ordered_json j;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : report.layers) {
    nlohmann::ordered_json e;
    e["name"] = l.activity.layer;
    e["spiking"] = l.activity.spiking;
    e["spike_count"] = l.activity.spike_count;
    e["sops"] = l.activity.sops;
    e["flops_ann"] = l.activity.flops_ann;
    e["macs_executed"] = l.activity.macs_executed;
    e["ec_snn_pj"] = l.ec_snn_pj;
    e["ec_ann_pj"] = l.ec_ann_pj;
    j["layers"].push_back(e);
  }
  j["ec_snn_pj"] = report.ec_snn_pj;
  j["ec_ann_pj"] = report.ec_ann_pj;
  j["reduction"] = report.reduction;
  return j.dump(2);
}

template void ActivityRecorder::conv<float>(const std::string&, const BasicTensor<float>&, const ConvGeometry&, bool,
                                            Index);
template void ActivityRecorder::conv<double>(const std::string&, const BasicTensor<double>&, const ConvGeometry&,
                                             bool, Index);
template void ActivityRecorder::linear<float>(const std::string&, const BasicTensor<float>&, Index, bool, Index);
template void ActivityRecorder::linear<double>(const std::string&, const BasicTensor<double>&, Index, bool, Index);

}  // namespace spikegate
