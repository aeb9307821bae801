#include "spikegate/blocks.hpp"

#include <cassert>
#include <stdexcept>

#include "spikegate/ops.hpp"

namespace spikegate {

const char* to_string(BlockKind kind) { return kind == BlockKind::regular ? "regular" : "lightweight"; }

BlockKind parse_block_kind(const std::string& text) {
  if (text == "regular") return BlockKind::regular;
  if (text == "lightweight") return BlockKind::lightweight;
  throw std::invalid_argument("unknown block kind '" + text + "'");
}

void BlockSpec::validate() const {
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("block: kernel size must be odd");
  if (stride != 1 && stride != 2) throw std::invalid_argument("block: stride must be 1 or 2");
  if (c_in < 1 || c_out < 1) throw std::invalid_argument("block: channel counts must be >= 1");
  if (in_h < 1 || in_w < 1) throw std::invalid_argument("block: input extents must be >= 1");
}

template <typename Scalar>
BasicSpikeBlock<Scalar> BasicSpikeBlock<Scalar>::init(const BlockSpec& spec, Rng& rng) {
  spec.validate();
  BasicSpikeBlock b;
  b.spec = spec;
  const Index k = spec.k, ci = spec.c_in, co = spec.c_out;
  auto add_norm = [&b](Index channels) {
    b.norm_gamma.push_back(trainable_full<Scalar>({channels}, Scalar(1)));
    b.norm_beta.push_back(trainable_full<Scalar>({channels}, Scalar(0)));
  };
  if (spec.kind == BlockKind::regular) {
    b.convs.push_back(kaiming_uniform<Scalar>({co, ci, k, k}, ci * k * k, rng));
    add_norm(co);
    b.convs.push_back(kaiming_uniform<Scalar>({co, co, k, k}, co * k * k, rng));
    add_norm(co);
  } else {
    b.convs.push_back(kaiming_uniform<Scalar>({ci, 1, k, k}, k * k, rng));
    add_norm(ci);
    b.convs.push_back(kaiming_uniform<Scalar>({co, ci, 1, 1}, ci, rng));
    add_norm(co);
    b.convs.push_back(kaiming_uniform<Scalar>({co, 1, k, k}, k * k, rng));
    add_norm(co);
  }
  if (spec.needs_projection()) {
    b.projection = kaiming_uniform<Scalar>({co, ci, 1, 1}, ci, rng);
    b.projection_gamma = trainable_full<Scalar>({co}, Scalar(1));
    b.projection_beta = trainable_full<Scalar>({co}, Scalar(0));
  }
  return b;
}

template <typename Scalar>
std::vector<BasicNamedTensor<Scalar>> BasicSpikeBlock<Scalar>::named_parameters(const std::string& prefix) const {
  std::vector<BasicNamedTensor<Scalar>> out;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    out.push_back({prefix + "conv" + id, convs[i]});
    out.push_back({prefix + "norm" + id + ".gamma", norm_gamma[i]});
    out.push_back({prefix + "norm" + id + ".beta", norm_beta[i]});
  }
  if (projection.defined()) {
    out.push_back({prefix + "proj", projection});
    out.push_back({prefix + "proj_norm.gamma", projection_gamma});
    out.push_back({prefix + "proj_norm.beta", projection_beta});
  }
  return out;
}

namespace {

template <typename Scalar>
BasicTensor<Scalar> fold_time(const BasicTensor<Scalar>& x) {
  Shape s(x.shape().begin() + 1, x.shape().end());
  s[0] *= x.dim(0);
  return reshape(x, s);
}

template <typename Scalar>
BasicTensor<Scalar> unfold_time(const BasicTensor<Scalar>& x, Index steps) {
  Shape s{steps, x.dim(0) / steps};
  s.insert(s.end(), x.shape().begin() + 1, x.shape().end());
  return reshape(x, s);
}

template <typename Scalar>
BasicTensor<Scalar> norm(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& gamma,
                         const BasicTensor<Scalar>& beta) {
  return group_norm(x, default_groups(x.dim(1)), gamma, beta);
}

// LIF over [T, B, ...] followed by folding time into the batch axis.
template <typename Scalar>
BasicTensor<Scalar> fire(const BasicTensor<Scalar>& membrane, const LifParams& lif) {
  auto spikes = fold_time(lif_forward(membrane, lif));
  assert(lif.spike_fn != SpikeFunction::heaviside || is_binary(spikes));
  return spikes;
}

template <typename Scalar>
void check_input(const BasicTensor<Scalar>& x, const BlockSpec& spec, const char* what) {
  if (x.rank() != 5 || x.dim(2) != spec.c_in) {
    throw ShapeError(std::string(what) + ": input " + to_string(x.shape()) + " must be [T,B," +
                     std::to_string(spec.c_in) + ",H,W]");
  }
}

template <typename Scalar>
BasicTensor<Scalar> join_shortcut(const BasicTensor<Scalar>& main, const BasicTensor<Scalar>& x,
                                  const BasicTensor<Scalar>& first_spikes, const BasicSpikeBlock<Scalar>& block,
                                  ActivityRecorder* recorder, const std::string& name) {
  const Index steps = x.dim(0);
  BasicTensor<Scalar> shortcut;
  if (block.projection.defined()) {
    const BlockSpec& s = block.spec;
    if (recorder) recorder->conv(name + ".proj", first_spikes, ConvGeometry{s.c_in, s.c_out, 1, s.stride, 0, false},
                                 true, steps);
    shortcut = norm(conv2d(first_spikes, block.projection, s.stride, 0), block.projection_gamma,
                    block.projection_beta);
  } else {
    shortcut = fold_time(x);
  }
  if (shortcut.shape() != main.shape()) {
    throw ShapeError("block shortcut " + to_string(shortcut.shape()) + " does not match main path " +
                     to_string(main.shape()));
  }
  return unfold_time(add(main, shortcut), steps);
}

}  // namespace

template <typename Scalar>
BasicTensor<Scalar> regular_block_forward(const BasicTensor<Scalar>& x, const BasicSpikeBlock<Scalar>& block,
                                          const LifParams& lif, ActivityRecorder* recorder) {
  if (block.spec.kind != BlockKind::regular) throw std::invalid_argument("regular_block_forward on a lightweight block");
  return block.forward(x, lif, recorder);
}

template <typename Scalar>
BasicTensor<Scalar> lightweight_block_forward(const BasicTensor<Scalar>& x, const BasicSpikeBlock<Scalar>& block,
                                              const LifParams& lif, ActivityRecorder* recorder) {
  if (block.spec.kind != BlockKind::lightweight) {
    throw std::invalid_argument("lightweight_block_forward on a regular block");
  }
  return block.forward(x, lif, recorder);
}

template <typename Scalar>
BasicTensor<Scalar> BasicSpikeBlock<Scalar>::forward(const BasicTensor<Scalar>& x, const LifParams& lif,
                                                     ActivityRecorder* recorder, const std::string& name) const {
  check_input(x, spec, "block forward");
  const Index steps = x.dim(0);
  const Index k = spec.k, pad = spec.padding(), ci = spec.c_in, co = spec.c_out;

  auto s1 = fire(x, lif);
  if (spec.kind == BlockKind::regular) {
    if (recorder) recorder->conv(name + ".conv1", s1, ConvGeometry{ci, co, k, spec.stride, pad, false}, true, steps);
    auto y = norm(conv2d(s1, convs[0], spec.stride, pad), norm_gamma[0], norm_beta[0]);
    auto s2 = fire(unfold_time(y, steps), lif);
    if (recorder) recorder->conv(name + ".conv2", s2, ConvGeometry{co, co, k, 1, pad, false}, true, steps);
    y = norm(conv2d(s2, convs[1], 1, pad), norm_gamma[1], norm_beta[1]);
    return join_shortcut(y, x, s1, *this, recorder, name);
  }

  if (recorder) recorder->conv(name + ".dw1", s1, ConvGeometry{ci, ci, k, spec.stride, pad, true}, true, steps);
  auto y = norm(depthwise_conv2d(s1, convs[0], spec.stride, pad), norm_gamma[0], norm_beta[0]);
  auto s2 = fire(unfold_time(y, steps), lif);
  if (recorder) recorder->conv(name + ".pw", s2, ConvGeometry{ci, co, 1, 1, 0, false}, true, steps);
  y = norm(pointwise_conv2d(s2, convs[1]), norm_gamma[1], norm_beta[1]);
  auto s3 = fire(unfold_time(y, steps), lif);
  if (recorder) recorder->conv(name + ".dw2", s3, ConvGeometry{co, co, k, 1, pad, true}, true, steps);
  y = norm(depthwise_conv2d(s3, convs[2], 1, pad), norm_gamma[2], norm_beta[2]);
  return join_shortcut(y, x, s1, *this, recorder, name);
}

#define SPIKEGATE_INSTANTIATE(S)                                                                               \
  template struct BasicSpikeBlock<S>;                                                                          \
  template BasicTensor<S> regular_block_forward<S>(const BasicTensor<S>&, const BasicSpikeBlock<S>&,           \
                                                   const LifParams&, ActivityRecorder*);                       \
  template BasicTensor<S> lightweight_block_forward<S>(const BasicTensor<S>&, const BasicSpikeBlock<S>&,       \
                                                       const LifParams&, ActivityRecorder*);

SPIKEGATE_INSTANTIATE(float)
SPIKEGATE_INSTANTIATE(double)

#undef SPIKEGATE_INSTANTIATE

}  // namespace spikegate
