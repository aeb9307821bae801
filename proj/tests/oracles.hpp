#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

#include "spikegate/blocks.hpp"
#include "spikegate/csgc.hpp"
#include "spikegate/eval.hpp"
#include "spikegate/init.hpp"

namespace oracle {

using spikegate::Index;

// Scalar LIF recurrence written out case by case.
struct ScalarTrace {
  std::vector<float> u, s, h;
};

inline ScalarTrace scalar_lif(const std::vector<float>& current, float tau, float th, float reset) {
  ScalarTrace tr;
  float h = 0.0f;
  for (float i : current) {
    const float u = h + i;
    tr.u.push_back(u);
    if (u >= th) {
      tr.s.push_back(1.0f);
      h = reset;
    } else {
      tr.s.push_back(0.0f);
      h = tau * u;
    }
    tr.h.push_back(h);
  }
  return tr;
}

// One MAC per (output pixel, output channel, input channel feeding it, tap).
inline std::int64_t naive_macs(Index k, Index c_in, Index c_out, Index out_h, Index out_w, bool depthwise) {
  std::int64_t macs = 0;
  for (Index o = 0; o < c_out; ++o)
    for (Index y = 0; y < out_h; ++y)
      for (Index x = 0; x < out_w; ++x)
        for (Index c = 0; c < c_in; ++c) {
          if (depthwise && c != o) continue;
          for (Index t = 0; t < k * k; ++t) ++macs;
        }
  return macs;
}

inline spikegate::BlockSpec random_spec(spikegate::Rng& rng) {
  std::uniform_int_distribution<int> kind(0, 1), ch(1, 24), kk(0, 2), st(1, 2), ext(1, 12);
  spikegate::BlockSpec s;
  s.kind = kind(rng) ? spikegate::BlockKind::regular : spikegate::BlockKind::lightweight;
  s.c_in = ch(rng);
  s.c_out = ch(rng);
  s.k = 1 + 2 * kk(rng);
  s.stride = st(rng);
  s.in_h = ext(rng);
  s.in_w = ext(rng);
  return s;
}

/// Main-path MACs of a block whose output is out_h x out_w.
inline std::int64_t block_macs(const spikegate::BlockSpec& s, Index out_h, Index out_w) {
  if (s.kind == spikegate::BlockKind::regular) {
    return naive_macs(s.k, s.c_in, s.c_out, out_h, out_w, false) +
           naive_macs(s.k, s.c_out, s.c_out, out_h, out_w, false);
  }
  return naive_macs(s.k, s.c_in, s.c_in, out_h, out_w, true) + naive_macs(1, s.c_in, s.c_out, out_h, out_w, false) +
         naive_macs(s.k, s.c_out, s.c_out, out_h, out_w, true);
}

using RRect = spikegate::RotatedRect<double>;

inline bool inside(const RRect& r, double x, double y) {
  const double dx = x - r.cx, dy = y - r.cy, c = std::cos(r.yaw), s = std::sin(r.yaw);
  return std::abs(c * dx + s * dy) <= r.length / 2 && std::abs(-s * dx + c * dy) <= r.width / 2;
}

inline double monte_carlo_iou(const RRect& a, const RRect& b, spikegate::Rng& rng, int samples) {
  const double reach = std::max(std::hypot(a.length, a.width), std::hypot(b.length, b.width)) / 2;
  const double x0 = std::min(a.cx, b.cx) - reach, x1 = std::max(a.cx, b.cx) + reach;
  const double y0 = std::min(a.cy, b.cy) - reach, y1 = std::max(a.cy, b.cy) + reach;
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  long both = 0, either = 0;
  for (int i = 0; i < samples; ++i) {
    const double x = ux(rng), y = uy(rng);
    const bool ia = inside(a, x, y), ib = inside(b, x, y);
    both += ia && ib;
    either += ia || ib;
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

inline RRect random_rect(spikegate::Rng& rng) {
  std::uniform_real_distribution<double> off(-1.5, 1.5), ext(0.3, 3), ang(-3.2, 3.2);
  return {off(rng), off(rng), ext(rng), ext(rng), ang(rng)};
}

/// A 50x50 px car label; `score` < 0 leaves it without a score.
inline spikegate::KittiObject car(double left, double top, double score = -1) {
  spikegate::KittiObject o;
  o.type = "Car";
  o.bbox = {left, top, left + 50, top + 50};
  o.h = 1.5;
  o.w = 1.6;
  o.l = 3.9;
  o.x = left / 10;
  o.y = 1.6;
  o.z = 20 + top / 10;
  if (score >= 0) o.score = score;
  return o;
}

inline spikegate::MatchConfig box2d_config(double thr = 0.7) {
  spikegate::MatchConfig cfg;
  cfg.mode = spikegate::IouMode::box2d;
  cfg.iou_threshold = thr;
  return cfg;
}

// Direct reading of the interpolated 11-point definition over a ranked list
// of hit/miss labels: every prefix of the ranking is a candidate operating point.
inline double brute_force_ap(std::vector<std::pair<double, bool>> ranked, std::size_t num_gt, int first_level) {
  if (num_gt == 0) return 0;
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  double total = 0;
  for (int level = first_level; level <= 10; ++level) {
    double best = 0;
    for (std::size_t k = 1; k <= ranked.size(); ++k) {
      std::size_t hits = 0;
      for (std::size_t j = 0; j < k; ++j) hits += ranked[j].second;
      const double recall = static_cast<double>(hits) / static_cast<double>(num_gt);
      if (recall >= level / 10.0) best = std::max(best, static_cast<double>(hits) / static_cast<double>(k));
    }
    total += best;
  }
  return total / (11 - first_level);
}

/// Images of well-separated car boxes. Each detection either copies one
/// ground truth (IoU 1) or sits where nothing is (IoU 0), so the hit/miss
/// label of every detection is known in advance.
struct RandomApSet {
  std::vector<spikegate::ImageEval> images;
  std::vector<std::pair<double, bool>> ranked;
  std::size_t num_gt = 0;
  std::vector<std::vector<bool>> claimed;
};

inline RandomApSet random_ap_set(spikegate::Rng& rng) {
  std::uniform_int_distribution<int> count(0, 8), images(1, 4);
  std::uniform_real_distribution<double> unit(0, 1);
  RandomApSet set;
  set.images.resize(static_cast<std::size_t>(images(rng)));
  set.claimed.resize(set.images.size());
  std::vector<std::tuple<double, std::size_t, int>> planned;
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const int gts = count(rng);
    set.num_gt += static_cast<std::size_t>(gts);
    for (int g = 0; g < gts; ++g) set.images[i].gts.push_back(car(100.0 * g, 0));
    set.claimed[i].assign(static_cast<std::size_t>(gts), false);
    const int dets = count(rng);
    for (int d = 0; d < dets; ++d) {
      std::uniform_int_distribution<int> target(-2, std::max(0, gts - 1));
      const int t = gts == 0 ? -1 : target(rng);
      const double score = unit(rng);
      set.images[i].dets.push_back(t >= 0 ? car(100.0 * t, 0, score) : car(50.0 + 100.0 * d, 300, score));
      planned.emplace_back(score, i, t);
    }
  }
  std::sort(planned.begin(), planned.end(), [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  for (const auto& [score, image, target] : planned) {
    bool hit = false;
    if (target >= 0 && !set.claimed[image][static_cast<std::size_t>(target)]) {
      set.claimed[image][static_cast<std::size_t>(target)] = true;
      hit = true;
    }
    set.ranked.emplace_back(score, hit);
  }
  return set;
}

// Every trainable tensor of a CSGC encoder as a flat list.
template <typename Scalar>
std::vector<spikegate::BasicTensor<Scalar>> flatten(const spikegate::BasicCsgcParams<Scalar>& p) {
  std::vector<spikegate::BasicTensor<Scalar>> out{p.ca_fc1, p.ca_fc2};
  for (std::size_t b = 0; b < 3; ++b) {
    out.push_back(p.sa_inner[b]);
    out.push_back(p.sa_outer[b]);
    out.push_back(p.branch_weight[b]);
  }
  return out;
}

template <typename Scalar>
spikegate::BasicCsgcParams<Scalar> unflatten(const spikegate::BasicCsgcParams<Scalar>& like,
                                             const std::vector<spikegate::BasicTensor<Scalar>>& v) {
  auto p = like;
  p.ca_fc1 = v[0];
  p.ca_fc2 = v[1];
  for (std::size_t b = 0; b < 3; ++b) {
    p.sa_inner[b] = v[2 + 3 * b];
    p.sa_outer[b] = v[3 + 3 * b];
    p.branch_weight[b] = v[4 + 3 * b];
  }
  return p;
}

}  // namespace oracle
