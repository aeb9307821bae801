#pragma once

// Box overlap measures, greedy score-ordered matching and 11-point
// interpolated average precision.

#include <string>
#include <vector>

#include "spikegate/geometry.hpp"
#include "spikegate/kitti.hpp"

namespace spikegate {

template <typename Scalar>
Scalar iou_2d(const BasicRect<Scalar>& a, const BasicRect<Scalar>& b);

/// Overlap area of two ground-plane rectangles; below 1e-12 counts as none.
template <typename Scalar>
Scalar bev_intersection(const RotatedRect<Scalar>& a, const RotatedRect<Scalar>& b);

template <typename Scalar>
Scalar iou_bev(const RotatedRect<Scalar>& a, const RotatedRect<Scalar>& b);

/// Footprint intersection times vertical overlap over the union of volumes.
double iou_3d(const Detection3D& a, const Detection3D& b);

enum class IouMode { box2d, bev, box3d };
enum class Difficulty { easy, moderate, hard };

const char* to_string(IouMode mode);
const char* to_string(Difficulty d);

/// Per-level limits on 2D box height (pixels), occlusion and truncation.
struct DifficultyRules {
  double min_height[3] = {40, 25, 25};
  int max_occlusion[3] = {0, 1, 2};
  double max_truncation[3] = {0.15, 0.3, 0.5};

  /// Same rules with every height limit multiplied by `factor` (for images
  /// smaller than KITTI's 375-row frames).
  DifficultyRules scaled_heights(double factor) const;
  bool admits(const KittiObject& gt, Difficulty d) const;
};

struct MatchConfig {
  double iou_threshold = 0.7;
  IouMode mode = IouMode::box3d;
  Difficulty difficulty = Difficulty::moderate;
  std::string category = "Car";
  DifficultyRules rules;

  void validate() const;
};

struct PrPoint {
  double recall = 0;
  double precision = 0;
  bool operator==(const PrPoint&) const = default;
};

struct PrCurve {
  std::vector<PrPoint> points;
  std::size_t num_gt = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;

  /// False when there were no ground truths, so recall is undefined.
  bool valid() const { return num_gt > 0; }
};

struct ImageEval {
  std::vector<KittiObject> gts;
  std::vector<KittiObject> dets;
};

double overlap(const KittiObject& a, const KittiObject& b, IouMode mode);

/// Detections of the configured category across all images are visited in
/// descending score order. Each one claims the unmatched admitted ground
/// truth of its image with the highest overlap at or above the threshold
/// (true positive), otherwise an unmatched ignored ground truth (dropped from
/// the curve), otherwise it is a false positive. A point is appended after
/// every true or false positive.
PrCurve match_and_pr(const std::vector<ImageEval>& images, const MatchConfig& cfg);

enum class RecallGrid {
  r11,         // 0.0, 0.1, ..., 1.0
  r11_no_zero  // 0.1, ..., 1.0
};

/// Highest precision at any recall >= level, 0 when no point reaches it.
double interpolated_precision(const PrCurve& curve, double recall_level);

/// Mean interpolated precision over the recall grid; 0 for an invalid curve.
double ap_r11(const PrCurve& curve, RecallGrid grid = RecallGrid::r11);

struct ApEntry {
  IouMode mode = IouMode::box3d;
  double threshold = 0.7;
  Difficulty difficulty = Difficulty::moderate;
  double ap = 0;
  bool valid = false;
  PrCurve curve;
};

/// Every mode x {0.5, 0.7} x difficulty combination.
std::vector<ApEntry> evaluate_all(const std::vector<ImageEval>& images, const std::string& category,
                                  const DifficultyRules& rules, RecallGrid grid = RecallGrid::r11);

std::string ap_report_json(const std::vector<ApEntry>& entries);
std::string pr_curves_csv(const std::vector<ApEntry>& entries);

}  // namespace spikegate
