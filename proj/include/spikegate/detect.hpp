#pragma once

// Keypoint heatmap head: peak extraction, 8-tuple box decoding and the
// training loss (penalty-reduced focal loss plus L1 at object centres).

#include <array>
#include <cstddef>
#include <vector>

#include "spikegate/geometry.hpp"
#include "spikegate/tensor.hpp"

namespace spikegate {

struct Priors {
  Eigen::Vector3d dims{1.63, 1.53, 3.88};  // (h, w, l)
  double depth_mean = 28.01;
  double depth_std = 16.32;

  void validate() const;
};

inline constexpr Index kRegressionChannels = 8;

/// Network outputs at one cell, in channel order.
struct RegressionTuple {
  double a_x = 0;
  double a_y = 0;
  double a_z = 0;
  double a_l = 0;
  double a_w = 0;
  double a_h = 0;
  double sin_b = 0;
  double cos_b = 1;

  std::array<double, 8> to_array() const { return {a_x, a_y, a_z, a_l, a_w, a_h, sin_b, cos_b}; }
  static RegressionTuple from_array(const std::array<double, 8>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
  }
  bool operator==(const RegressionTuple&) const = default;
};

struct Peak {
  Index batch = 0;
  int category = 0;
  Index y = 0;
  Index x = 0;
  double score = 0;
  bool operator==(const Peak&) const = default;
};

/// Local maxima of a [B, K, H, W] probability map: a cell qualifies when it
/// equals the maximum of its 3x3 neighbourhood and reaches `score_thresh`.
/// The top `max_dets` per batch item are kept, ordered by descending score
/// (ties by class, row, column).
template <typename Scalar>
std::vector<Peak> extract_peaks(const BasicTensor<Scalar>& heatmap, double score_thresh = 0.25,
                                std::size_t max_dets = 50);

struct DecodeStats {
  std::size_t discarded_behind_camera = 0;
};

/// Box whose projected geometric centre sits at (cell + offset) * down_ratio.
/// Returns false (and counts a warning) when the decoded depth is not positive.
bool decode_tuple(const RegressionTuple& t, Index cell_x, Index cell_y, const CameraCalib& calib,
                  const Priors& priors, double down_ratio, Detection3D& out, DecodeStats* stats = nullptr);

/// Inverse of decode_tuple for a ground-truth box: the containing cell and
/// the tuple that decodes back to the box.
struct EncodedTarget {
  Index cell_x = 0;
  Index cell_y = 0;
  RegressionTuple tuple;
};

EncodedTarget encode_target(const Detection3D& box, const CameraCalib& calib, const Priors& priors,
                            double down_ratio);

/// Decodes every peak of a batch. `regression` is [B, 8, H, W]; calibs has one
/// entry per batch item.
template <typename Scalar>
std::vector<std::vector<Detection3D>> decode_detections(const BasicTensor<Scalar>& heat_probs,
                                                        const BasicTensor<Scalar>& regression,
                                                        const std::vector<CameraCalib>& calibs,
                                                        const Priors& priors, double down_ratio,
                                                        double score_thresh, std::size_t max_dets,
                                                        DecodeStats* stats = nullptr);

struct ObjectTarget {
  Index batch = 0;
  int category = 0;
  Index cell_y = 0;
  Index cell_x = 0;
  RegressionTuple tuple;
};

struct DetectionTargets {
  Index batch = 0;
  Index classes = 1;
  Index height = 0;
  Index width = 0;
  std::vector<double> heatmap;  // [B, K, H, W], 1 at object centres
  std::vector<ObjectTarget> objects;
};

/// Splats a Gaussian per object around its encoded centre cell.
DetectionTargets build_targets(const std::vector<std::vector<Detection3D>>& boxes,
                               const std::vector<CameraCalib>& calibs, Index classes, Index out_h, Index out_w,
                               const Priors& priors, double down_ratio);

struct DetectionLossBreakdown {
  double heatmap = 0;
  double regression = 0;
};

struct DetectionLossWeights {
  double heatmap = 1.0;
  double regression = 1.0;
};

/// heat_logits: [B, K, H, W]; regression: [B, 8, H, W]. Both terms are
/// normalized by max(1, number of objects).
template <typename Scalar>
BasicTensor<Scalar> detection_loss(const BasicTensor<Scalar>& heat_logits, const BasicTensor<Scalar>& regression,
                                   const DetectionTargets& targets, const DetectionLossWeights& weights = {},
                                   DetectionLossBreakdown* breakdown = nullptr);

}  // namespace spikegate
