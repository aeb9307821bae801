#include "spikegate/detect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "spikegate/errors.hpp"

namespace spikegate {

void Priors::validate() const {
  if (!(dims.minCoeff() > 0 && depth_mean > 0 && depth_std > 0)) {
    throw std::invalid_argument("priors must be positive");
  }
}

template <typename Scalar>
std::vector<Peak> extract_peaks(const BasicTensor<Scalar>& heatmap, double score_thresh, std::size_t max_dets) {
  if (heatmap.rank() != 4) throw ShapeError("extract_peaks: heatmap " + to_string(heatmap.shape()) + " must be [B,K,H,W]");
  const Index b = heatmap.dim(0), k = heatmap.dim(1), h = heatmap.dim(2), w = heatmap.dim(3);
  const auto& v = heatmap.values();
  std::vector<Peak> out;
  for (Index n = 0; n < b; ++n) {
    std::vector<Peak> found;
    for (Index c = 0; c < k; ++c) {
      const Scalar* plane = v.data() + (n * k + c) * h * w;
      for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
          const Scalar s = plane[y * w + x];
          if (!(s >= score_thresh)) continue;
          bool is_max = true;
          for (Index dy = -1; dy <= 1 && is_max; ++dy) {
            for (Index dx = -1; dx <= 1; ++dx) {
              const Index yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              if (plane[yy * w + xx] > s) {
                is_max = false;
                break;
              }
            }
          }
          if (is_max) found.push_back({n, static_cast<int>(c), y, x, static_cast<double>(s)});
        }
      }
    }
    std::stable_sort(found.begin(), found.end(), [](const Peak& a, const Peak& p) { return a.score > p.score; });
    if (found.size() > max_dets) found.resize(max_dets);
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

bool decode_tuple(const RegressionTuple& t, Index cell_x, Index cell_y, const CameraCalib& calib,
                  const Priors& priors, double down_ratio, Detection3D& out, DecodeStats* stats) {
  const double z = priors.depth_mean + t.a_z * priors.depth_std;
  if (!(z > 0)) {
    if (stats) ++stats->discarded_behind_camera;
    return false;
  }
  const Eigen::Vector2d pixel((static_cast<double>(cell_x) + t.a_x) * down_ratio,
                              (static_cast<double>(cell_y) + t.a_y) * down_ratio);
  const Eigen::Vector3d center = calib.unproject(pixel, z);
  out.dims = Eigen::Vector3d(priors.dims[0] * std::exp(t.a_h), priors.dims[1] * std::exp(t.a_w),
                             priors.dims[2] * std::exp(t.a_l));
  out.location = center + Eigen::Vector3d(0, out.dims[0] / 2, 0);
  const double norm = std::hypot(t.sin_b, t.cos_b);
  const double alpha = norm > 0 ? std::atan2(t.sin_b / norm, t.cos_b / norm) : 0.0;
  out.yaw = wrap_angle(alpha + std::atan2(center.x(), center.z()));
  out.box2d = project_box(out, calib);
  return true;
}

EncodedTarget encode_target(const Detection3D& box, const CameraCalib& calib, const Priors& priors,
                            double down_ratio) {
  const Eigen::Vector3d center = box.center();
  const Eigen::Vector2d p = calib.project(center) / down_ratio;
  EncodedTarget e;
  e.cell_x = static_cast<Index>(std::floor(p.x()));
  e.cell_y = static_cast<Index>(std::floor(p.y()));
  RegressionTuple& t = e.tuple;
  t.a_x = p.x() - static_cast<double>(e.cell_x);
  t.a_y = p.y() - static_cast<double>(e.cell_y);
  t.a_z = (center.z() - priors.depth_mean) / priors.depth_std;
  t.a_h = std::log(box.dims[0] / priors.dims[0]);
  t.a_w = std::log(box.dims[1] / priors.dims[1]);
  t.a_l = std::log(box.dims[2] / priors.dims[2]);
  const double alpha = wrap_angle(box.yaw - std::atan2(center.x(), center.z()));
  t.sin_b = std::sin(alpha);
  t.cos_b = std::cos(alpha);
  return e;
}

template <typename Scalar>
std::vector<std::vector<Detection3D>> decode_detections(const BasicTensor<Scalar>& heat_probs,
                                                        const BasicTensor<Scalar>& regression,
                                                        const std::vector<CameraCalib>& calibs,
                                                        const Priors& priors, double down_ratio,
                                                        double score_thresh, std::size_t max_dets,
                                                        DecodeStats* stats) {
  if (regression.rank() != 4 || regression.dim(1) != kRegressionChannels || heat_probs.rank() != 4 ||
      regression.dim(0) != heat_probs.dim(0) || regression.dim(2) != heat_probs.dim(2) ||
      regression.dim(3) != heat_probs.dim(3)) {
    throw ShapeError("decode_detections: regression " + to_string(regression.shape()) +
                     " must be [B,8,H,W] matching heatmap " + to_string(heat_probs.shape()));
  }
  const Index b = heat_probs.dim(0), h = heat_probs.dim(2), w = heat_probs.dim(3);
  if (static_cast<Index>(calibs.size()) != b) throw ShapeError("decode_detections: one calibration per batch item");
  std::vector<std::vector<Detection3D>> out(static_cast<std::size_t>(b));
  const auto& r = regression.values();
  for (const Peak& p : extract_peaks(heat_probs, score_thresh, max_dets)) {
    std::array<double, 8> v;
    for (Index c = 0; c < kRegressionChannels; ++c) {
      v[static_cast<std::size_t>(c)] = static_cast<double>(r[((p.batch * kRegressionChannels + c) * h + p.y) * w + p.x]);
    }
    Detection3D det;
    if (!decode_tuple(RegressionTuple::from_array(v), p.x, p.y, calibs[static_cast<std::size_t>(p.batch)], priors,
                      down_ratio, det, stats)) {
      continue;
    }
    det.category = p.category;
    det.score = p.score;
    out[static_cast<std::size_t>(p.batch)].push_back(det);
  }
  return out;
}

DetectionTargets build_targets(const std::vector<std::vector<Detection3D>>& boxes,
                               const std::vector<CameraCalib>& calibs, Index classes, Index out_h, Index out_w,
                               const Priors& priors, double down_ratio) {
  if (boxes.size() != calibs.size()) throw ShapeError("build_targets: one calibration per batch item");
  DetectionTargets t;
  t.batch = static_cast<Index>(boxes.size());
  t.classes = classes;
  t.height = out_h;
  t.width = out_w;
  t.heatmap.assign(static_cast<std::size_t>(t.batch * classes * out_h * out_w), 0.0);
  for (Index n = 0; n < t.batch; ++n) {
    const CameraCalib& calib = calibs[static_cast<std::size_t>(n)];
    for (const Detection3D& box : boxes[static_cast<std::size_t>(n)]) {
      if (box.category < 0 || box.category >= classes) continue;
      const EncodedTarget e = encode_target(box, calib, priors, down_ratio);
      if (e.cell_x < 0 || e.cell_x >= out_w || e.cell_y < 0 || e.cell_y >= out_h) continue;
      t.objects.push_back({n, box.category, e.cell_y, e.cell_x, e.tuple});
      const Rect r = project_box(box, calib);
      const double extent = std::min(r.width(), r.height()) / down_ratio;
      const Index radius = std::max<Index>(0, static_cast<Index>(extent / 4));
      const double sigma = (2.0 * static_cast<double>(radius) + 1.0) / 6.0;
      double* plane = t.heatmap.data() + (n * classes + box.category) * out_h * out_w;
      for (Index dy = -radius; dy <= radius; ++dy) {
        for (Index dx = -radius; dx <= radius; ++dx) {
          const Index y = e.cell_y + dy, x = e.cell_x + dx;
          if (y < 0 || y >= out_h || x < 0 || x >= out_w) continue;
          const double g = std::exp(-static_cast<double>(dx * dx + dy * dy) / (2 * sigma * sigma));
          plane[y * out_w + x] = std::max(plane[y * out_w + x], g);
        }
      }
    }
  }
  return t;
}

template <typename Scalar>
BasicTensor<Scalar> detection_loss(const BasicTensor<Scalar>& heat_logits, const BasicTensor<Scalar>& regression,
                                   const DetectionTargets& targets, const DetectionLossWeights& weights,
                                   DetectionLossBreakdown* breakdown) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  const Shape heat_shape{targets.batch, targets.classes, targets.height, targets.width};
  const Shape reg_shape{targets.batch, kRegressionChannels, targets.height, targets.width};
  if (heat_logits.shape() != heat_shape || regression.shape() != reg_shape) {
    throw ShapeError("detection_loss: predictions " + to_string(heat_logits.shape()) + " / " +
                     to_string(regression.shape()) + " do not match targets " + to_string(heat_shape) + " / " +
                     to_string(reg_shape));
  }
  constexpr double alpha = 2.0, beta = 4.0, eps = 1e-4;
  const double norm = std::max<double>(1.0, static_cast<double>(targets.objects.size()));
  const Index n_heat = heat_logits.numel();

  Vector heat_grad(n_heat);
  double focal = 0.0;
  const auto& z = heat_logits.values();
  for (Index i = 0; i < n_heat; ++i) {
    const double raw = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
    const double p = std::clamp(raw, eps, 1.0 - eps);
    const double dp = (raw > eps && raw < 1.0 - eps) ? p * (1.0 - p) : 0.0;
    const double y = targets.heatmap[static_cast<std::size_t>(i)];
    double loss, dl;
    if (y >= 1.0) {
      loss = -std::pow(1 - p, alpha) * std::log(p);
      dl = alpha * std::pow(1 - p, alpha - 1) * std::log(p) - std::pow(1 - p, alpha) / p;
    } else {
      const double m = std::pow(1 - y, beta);
      loss = -m * std::pow(p, alpha) * std::log(1 - p);
      dl = -m * (alpha * std::pow(p, alpha - 1) * std::log(1 - p) - std::pow(p, alpha) / (1 - p));
    }
    focal += loss;
    heat_grad[i] = static_cast<Scalar>(weights.heatmap * dl * dp / norm);
  }
  focal /= norm;

  Vector reg_grad = Vector::Zero(regression.numel());
  double l1 = 0.0;
  const auto& r = regression.values();
  const Index h = targets.height, w = targets.width;
  for (const ObjectTarget& o : targets.objects) {
    const auto target = o.tuple.to_array();
    for (Index c = 0; c < kRegressionChannels; ++c) {
      const Index idx = ((o.batch * kRegressionChannels + c) * h + o.cell_y) * w + o.cell_x;
      const double d = static_cast<double>(r[idx]) - target[static_cast<std::size_t>(c)];
      l1 += std::abs(d);
      reg_grad[idx] += static_cast<Scalar>(weights.regression * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / norm);
    }
  }
  l1 /= norm;

  if (!std::isfinite(focal) || !std::isfinite(l1)) throw NumericError("detection_loss: non-finite loss");
  if (breakdown) *breakdown = {focal, l1};
  Vector out(1);
  out[0] = static_cast<Scalar>(weights.heatmap * focal + weights.regression * l1);
  return record_op<Scalar>({1}, std::move(out), {heat_logits, regression},
                           [heat_logits, regression, heat_grad, reg_grad](const Vector& g) {
                             accumulate_grad(heat_logits, heat_grad * g[0]);
                             accumulate_grad(regression, reg_grad * g[0]);
                           });
}

#define SPIKEGATE_INSTANTIATE(S)                                                                               \
  template std::vector<Peak> extract_peaks<S>(const BasicTensor<S>&, double, std::size_t);                     \
  template std::vector<std::vector<Detection3D>> decode_detections<S>(                                         \
      const BasicTensor<S>&, const BasicTensor<S>&, const std::vector<CameraCalib>&, const Priors&, double,     \
      double, std::size_t, DecodeStats*);                                                                      \
  template BasicTensor<S> detection_loss<S>(const BasicTensor<S>&, const BasicTensor<S>&,                      \
                                            const DetectionTargets&, const DetectionLossWeights&,              \
                                            DetectionLossBreakdown*);

SPIKEGATE_INSTANTIATE(float)
SPIKEGATE_INSTANTIATE(double)

#undef SPIKEGATE_INSTANTIATE

}  // namespace spikegate
