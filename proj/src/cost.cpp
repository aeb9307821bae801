#include "spikegate/cost.hpp"

#include <numeric>

namespace spikegate {
namespace {

std::int64_t sum_params(const std::vector<LayerCost>& v) {
  return std::accumulate(v.begin(), v.end(), std::int64_t{0},
                         [](std::int64_t acc, const LayerCost& l) { return acc + l.params; });
}

std::int64_t sum_flops(const std::vector<LayerCost>& v) {
  return std::accumulate(v.begin(), v.end(), std::int64_t{0},
                         [](std::int64_t acc, const LayerCost& l) { return acc + l.flops; });
}

void add_shortcut(CostReport& r, const BlockSpec& spec) {
  if (!spec.needs_projection()) return;
  r.shortcut.push_back({"proj", conv_params(1, spec.c_in, spec.c_out),
                        conv_flops(1, spec.c_in, spec.c_out, spec.out_h(), spec.out_w())});
}

}  // namespace

std::int64_t CostReport::params() const { return sum_params(layers); }
std::int64_t CostReport::flops() const { return sum_flops(layers); }
std::int64_t CostReport::shortcut_params() const { return sum_params(shortcut); }
std::int64_t CostReport::shortcut_flops() const { return sum_flops(shortcut); }

std::int64_t conv_params(Index k, Index c_in, Index c_out) { return std::int64_t{k} * k * c_in * c_out; }

std::int64_t conv_flops(Index k, Index c_in, Index c_out, Index out_h, Index out_w) {
  return conv_params(k, c_in, c_out) * out_h * out_w;
}

CostReport count_regular(const BlockSpec& spec) {
  spec.validate();
  const Index ho = spec.out_h(), wo = spec.out_w();
  CostReport r;
  r.layers.push_back({"conv1", conv_params(spec.k, spec.c_in, spec.c_out),
                      conv_flops(spec.k, spec.c_in, spec.c_out, ho, wo)});
  r.layers.push_back({"conv2", conv_params(spec.k, spec.c_out, spec.c_out),
                      conv_flops(spec.k, spec.c_out, spec.c_out, ho, wo)});
  add_shortcut(r, spec);
  return r;
}

CostReport count_lightweight(const BlockSpec& spec) {
  spec.validate();
  const Index ho = spec.out_h(), wo = spec.out_w();
  CostReport r;
  // Depthwise stages: one k x k filter per channel.
  r.layers.push_back({"dw1", conv_params(spec.k, spec.c_in, 1), conv_flops(spec.k, spec.c_in, 1, ho, wo)});
  r.layers.push_back({"pw", conv_params(1, spec.c_in, spec.c_out), conv_flops(1, spec.c_in, spec.c_out, ho, wo)});
  r.layers.push_back({"dw2", conv_params(spec.k, spec.c_out, 1), conv_flops(spec.k, spec.c_out, 1, ho, wo)});
  add_shortcut(r, spec);
  return r;
}

CostReport count_block(const BlockSpec& spec) {
  return spec.kind == BlockKind::regular ? count_regular(spec) : count_lightweight(spec);
}

CostRatio cost_ratio(const BlockSpec& spec) {
  const CostReport reg = count_regular(spec.with_kind(BlockKind::regular));
  const CostReport light = count_lightweight(spec.with_kind(BlockKind::lightweight));
  return {{light.params(), reg.params()}, {light.flops(), reg.flops()}};
}

double replacement_ratio(Index k, Index c_in, Index c_out) {
  const double separable = static_cast<double>(conv_params(k, c_in, 1) + conv_params(1, c_in, c_out));
  return separable / static_cast<double>(conv_params(k, c_in, c_out));
}

bool in_reference_regime(const BlockSpec& spec) {
  return spec.k == 3 && spec.c_in == 2 * spec.c_out && spec.stride == 2;
}

double claimed_ratio_form(Index c_in) { return 1.0 / (2.0 * static_cast<double>(c_in)) + 1.0 / 27.0; }

}  // namespace spikegate
