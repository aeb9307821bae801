#include "spikegate/model.hpp"

#include "spikegate/detect.hpp"
#include "spikegate/errors.hpp"
#include "spikegate/ops.hpp"

namespace spikegate {

std::vector<Index> ModelSpec::stage_strides() const {
  return task == Task::classify ? std::vector<Index>{1, 2, 2} : std::vector<Index>{2, 2, 1};
}

Index ModelSpec::out_h() const {
  Index h = in_h;
  for (Index s : stage_strides()) h = conv_out_extent(h, 3, s, 1);
  return h;
}

Index ModelSpec::out_w() const {
  Index w = in_w;
  for (Index s : stage_strides()) w = conv_out_extent(w, 3, s, 1);
  return w;
}

ModelSpec model_spec(const RunConfig& cfg, Index in_channels, Index in_h, Index in_w, Index outputs) {
  ModelSpec m;
  m.task = cfg.task;
  m.coding = cfg.coding;
  m.attention = {cfg.channel_attention, cfg.spatial_attention};
  m.block = cfg.block;
  m.widths = cfg.widths;
  m.in_channels = in_channels;
  m.in_h = in_h;
  m.in_w = in_w;
  m.outputs = outputs;
  m.time_steps = cfg.time_steps;
  m.lif = cfg.lif();
  return m;
}

template <typename Scalar>
BasicSpikeNet<Scalar> BasicSpikeNet<Scalar>::init(const ModelSpec& spec, Rng& rng) {
  spec.lif.validate();
  if (spec.widths.size() != 3) throw std::invalid_argument("model needs three stage widths");
  BasicSpikeNet n;
  n.spec = spec;
  if (spec.coding == Coding::csgc) n.csgc = BasicCsgcParams<Scalar>::init(spec.in_channels, 4, rng);
  const Index w0 = spec.widths[0];
  n.stem = kaiming_uniform<Scalar>({w0, spec.in_channels, 3, 3}, spec.in_channels * 9, rng);
  n.stem_gamma = trainable_full<Scalar>({w0}, Scalar(1));
  n.stem_beta = trainable_full<Scalar>({w0}, Scalar(0));
  Index c = w0, h = spec.in_h, w = spec.in_w;
  const auto strides = spec.stage_strides();
  for (std::size_t i = 0; i < 3; ++i) {
    BlockSpec b{spec.block, c, spec.widths[i], 3, strides[i], h, w};
    n.stages.push_back(BasicSpikeBlock<Scalar>::init(b, rng));
    c = b.c_out;
    h = b.out_h();
    w = b.out_w();
  }
  if (spec.task == Task::classify) {
    n.fc_weight = kaiming_uniform<Scalar>({spec.outputs, c}, c, rng);
    n.fc_bias = trainable_full<Scalar>({spec.outputs}, Scalar(0));
  } else {
    n.heat_weight = kaiming_uniform<Scalar>({spec.outputs, c, 1, 1}, c, rng);
    n.heat_weight.mutable_values() *= Scalar(0.1);
    n.heat_bias = trainable_full<Scalar>({1, spec.outputs, 1, 1}, Scalar(-2.19));
    n.reg_weight = kaiming_uniform<Scalar>({kRegressionChannels, c, 1, 1}, c, rng);
    n.reg_weight.mutable_values() *= Scalar(0.1);
    n.reg_bias = trainable_full<Scalar>({1, kRegressionChannels, 1, 1}, Scalar(0));
    n.reg_bias.mutable_values()[7] = Scalar(1);  // cos of the observation angle
  }
  return n;
}

template <typename Scalar>
std::vector<BasicNamedTensor<Scalar>> BasicSpikeNet<Scalar>::named_parameters() const {
  std::vector<BasicNamedTensor<Scalar>> out;
  if (csgc) {
    auto p = csgc->named_parameters("csgc.");
    out.insert(out.end(), p.begin(), p.end());
  }
  out.push_back({"stem", stem});
  out.push_back({"stem_norm.gamma", stem_gamma});
  out.push_back({"stem_norm.beta", stem_beta});
  for (std::size_t i = 0; i < stages.size(); ++i) {
    auto p = stages[i].named_parameters("stage" + std::to_string(i + 1) + ".");
    out.insert(out.end(), p.begin(), p.end());
  }
  if (spec.task == Task::classify) {
    out.push_back({"fc.weight", fc_weight});
    out.push_back({"fc.bias", fc_bias});
  } else {
    out.push_back({"head.heat.weight", heat_weight});
    out.push_back({"head.heat.bias", heat_bias});
    out.push_back({"head.reg.weight", reg_weight});
    out.push_back({"head.reg.bias", reg_bias});
  }
  return out;
}

namespace {

template <typename Scalar>
BasicTensor<Scalar> fold(const BasicTensor<Scalar>& x) {
  Shape s(x.shape().begin() + 1, x.shape().end());
  s[0] *= x.dim(0);
  return reshape(x, s);
}

template <typename Scalar>
BasicTensor<Scalar> unfold(const BasicTensor<Scalar>& x, Index steps) {
  Shape s{steps, x.dim(0) / steps};
  s.insert(s.end(), x.shape().begin() + 1, x.shape().end());
  return reshape(x, s);
}

template <typename Scalar>
BasicTensor<Scalar> head(const BasicTensor<Scalar>& spikes, const BasicTensor<Scalar>& weight,
                         const BasicTensor<Scalar>& bias, Index steps, ActivityRecorder* recorder,
                         const std::string& name) {
  if (recorder) {
    recorder->conv(name, spikes, ConvGeometry{spikes.dim(1), weight.dim(0), 1, 1, 0, false}, true, steps);
  }
  return time_mean(unfold(add(pointwise_conv2d(spikes, weight), bias), steps));
}

}  // namespace

template <typename Scalar>
BasicModelOutput<Scalar> BasicSpikeNet<Scalar>::forward(const BasicTensor<Scalar>& x,
                                                        ActivityRecorder* recorder) const {
  if (x.rank() != 4 || x.dim(1) != spec.in_channels || x.dim(2) != spec.in_h || x.dim(3) != spec.in_w) {
    throw ShapeError("model input " + to_string(x.shape()) + " must be [B," + std::to_string(spec.in_channels) +
                     "," + std::to_string(spec.in_h) + "," + std::to_string(spec.in_w) + "]");
  }
  const Index steps = spec.time_steps;
  const BasicTensor<Scalar> coded =
      csgc ? csgc_encode(x, steps, *csgc, spec.lif, spec.attention, recorder).values : direct_encode(x, steps).values;

  const auto folded = fold(coded);
  if (recorder) {
    recorder->conv("stem", folded, ConvGeometry{spec.in_channels, spec.widths[0], 3, 1, 1, false}, false, steps);
  }
  auto membrane = unfold(group_norm(conv2d(folded, stem, 1, 1), default_groups(spec.widths[0]), stem_gamma,
                                    stem_beta),
                         steps);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    membrane = stages[i].forward(membrane, spec.lif, recorder, "stage" + std::to_string(i + 1));
  }
  const auto spikes = fold(lif_forward(membrane, spec.lif));

  BasicModelOutput<Scalar> out;
  if (spec.task == Task::classify) {
    const Index c = spikes.dim(1);
    const auto rates = time_mean(reshape(spatial_mean(spikes), {steps, x.dim(0), c}));
    if (recorder) recorder->linear("fc", rates, spec.outputs, false, 1);
    out.logits = linear(rates, fc_weight, std::optional<BasicTensor<Scalar>>(fc_bias));
  } else {
    out.heat_logits = head(spikes, heat_weight, heat_bias, steps, recorder, "head.heat");
    out.regression = head(spikes, reg_weight, reg_bias, steps, recorder, "head.reg");
  }
  return out;
}

template struct BasicSpikeNet<float>;
template struct BasicSpikeNet<double>;

}  // namespace spikegate
