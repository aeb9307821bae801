#include "spikegate/eval.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace spikegate {

template <typename Scalar>
Scalar iou_2d(const BasicRect<Scalar>& a, const BasicRect<Scalar>& b) {
  const BasicRect<Scalar> inter{std::max(a.left, b.left), std::max(a.top, b.top), std::min(a.right, b.right),
                                std::min(a.bottom, b.bottom)};
  const Scalar i = inter.area();
  const Scalar u = a.area() + b.area() - i;
  return u > 0 && a.area() > 0 && b.area() > 0 ? i / u : Scalar(0);
}

template <typename Scalar>
Scalar bev_intersection(const RotatedRect<Scalar>& a, const RotatedRect<Scalar>& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const Polygon<Scalar> pa(ca.begin(), ca.end());
  const Polygon<Scalar> pb(cb.begin(), cb.end());
  const Polygon<Scalar> clipped = clip_polygon(pa, pb);
  if (clipped.size() < 3) return 0;
  const Scalar area = std::abs(signed_area(clipped));
  return area < Scalar(1e-12) ? Scalar(0) : area;
}

template <typename Scalar>
Scalar iou_bev(const RotatedRect<Scalar>& a, const RotatedRect<Scalar>& b) {
  const Scalar i = bev_intersection(a, b);
  const Scalar u = a.area() + b.area() - i;
  return u > 0 && i > 0 ? std::clamp(i / u, Scalar(0), Scalar(1)) : Scalar(0);
}

double iou_3d(const Detection3D& a, const Detection3D& b) {
  const double footprint = bev_intersection(bev_rect(a), bev_rect(b));
  // y points down: a box spans [y - h, y].
  const double top = std::max(a.location.y() - a.dims[0], b.location.y() - b.dims[0]);
  const double bottom = std::min(a.location.y(), b.location.y());
  const double inter = footprint * std::max(0.0, bottom - top);
  const double va = a.dims.prod(), vb = b.dims.prod();
  const double u = va + vb - inter;
  return u > 0 && inter > 0 ? std::clamp(inter / u, 0.0, 1.0) : 0.0;
}

const char* to_string(IouMode mode) {
  switch (mode) {
    case IouMode::box2d: return "2d";
    case IouMode::bev: return "bev";
    case IouMode::box3d: return "3d";
  }
  return "?";
}

const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::moderate: return "moderate";
    case Difficulty::hard: return "hard";
  }
  return "?";
}

DifficultyRules DifficultyRules::scaled_heights(double factor) const {
  DifficultyRules r = *this;
  for (double& h : r.min_height) h *= factor;
  return r;
}

bool DifficultyRules::admits(const KittiObject& gt, Difficulty d) const {
  const auto i = static_cast<std::size_t>(d);
  return gt.bbox.height() >= min_height[i] && gt.occluded <= max_occlusion[i] && gt.truncated <= max_truncation[i];
}

void MatchConfig::validate() const {
  if (!(iou_threshold > 0 && iou_threshold <= 1)) throw std::invalid_argument("IoU threshold must lie in (0, 1]");
}

double overlap(const KittiObject& a, const KittiObject& b, IouMode mode) {
  switch (mode) {
    case IouMode::box2d: return iou_2d(a.bbox, b.bbox);
    case IouMode::bev: return iou_bev(bev_rect(to_detection(a)), bev_rect(to_detection(b)));
    case IouMode::box3d: return iou_3d(to_detection(a), to_detection(b));
  }
  return 0;
}

PrCurve match_and_pr(const std::vector<ImageEval>& images, const MatchConfig& cfg) {
  cfg.validate();
  struct Ref {
    std::size_t image;
    std::size_t det;
    double score;
  };
  struct Gt {
    std::size_t index;
    bool admitted;
  };
  std::vector<std::vector<Gt>> gts(images.size());
  std::vector<Ref> order;
  PrCurve curve;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t g = 0; g < images[i].gts.size(); ++g) {
      const KittiObject& gt = images[i].gts[g];
      if (gt.type != cfg.category) continue;
      const bool admitted = cfg.rules.admits(gt, cfg.difficulty);
      gts[i].push_back({g, admitted});
      if (admitted) ++curve.num_gt;
    }
    for (std::size_t d = 0; d < images[i].dets.size(); ++d) {
      const KittiObject& det = images[i].dets[d];
      if (det.type == cfg.category) order.push_back({i, d, det.score.value_or(1.0)});
    }
  }
  std::stable_sort(order.begin(), order.end(), [](const Ref& a, const Ref& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> used(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) used[i].assign(gts[i].size(), false);

  for (const Ref& r : order) {
    const KittiObject& det = images[r.image].dets[r.det];
    int best_admitted = -1, best_ignored = -1;
    double best_admitted_iou = -1, best_ignored_iou = -1;
    for (std::size_t g = 0; g < gts[r.image].size(); ++g) {
      if (used[r.image][g]) continue;
      const double iou = overlap(det, images[r.image].gts[gts[r.image][g].index], cfg.mode);
      if (iou < cfg.iou_threshold) continue;
      if (gts[r.image][g].admitted) {
        if (iou > best_admitted_iou) best_admitted_iou = iou, best_admitted = static_cast<int>(g);
      } else if (iou > best_ignored_iou) {
        best_ignored_iou = iou, best_ignored = static_cast<int>(g);
      }
    }
    if (best_admitted >= 0) {
      used[r.image][static_cast<std::size_t>(best_admitted)] = true;
      ++curve.true_positives;
    } else if (best_ignored >= 0) {
      used[r.image][static_cast<std::size_t>(best_ignored)] = true;
      continue;
    } else {
      ++curve.false_positives;
    }
    if (curve.num_gt == 0) continue;
    const double tp = static_cast<double>(curve.true_positives);
    curve.points.push_back({tp / static_cast<double>(curve.num_gt),
                            tp / static_cast<double>(curve.true_positives + curve.false_positives)});
  }
  return curve;
}

double interpolated_precision(const PrCurve& curve, double recall_level) {
  double best = 0;
  for (const PrPoint& p : curve.points) {
    if (p.recall >= recall_level) best = std::max(best, p.precision);
  }
  return best;
}

double ap_r11(const PrCurve& curve, RecallGrid grid) {
  if (!curve.valid()) return 0;
  const int first = grid == RecallGrid::r11 ? 0 : 1;
  double total = 0;
  for (int i = first; i <= 10; ++i) total += interpolated_precision(curve, i / 10.0);
  return total / static_cast<double>(11 - first);
}

std::vector<ApEntry> evaluate_all(const std::vector<ImageEval>& images, const std::string& category,
                                  const DifficultyRules& rules, RecallGrid grid) {
  std::vector<ApEntry> out;
  for (IouMode mode : {IouMode::box2d, IouMode::bev, IouMode::box3d}) {
    for (double thr : {0.5, 0.7}) {
      for (Difficulty d : {Difficulty::easy, Difficulty::moderate, Difficulty::hard}) {
        MatchConfig cfg{thr, mode, d, category, rules};
        ApEntry e{mode, thr, d, 0, false, match_and_pr(images, cfg)};
        e.valid = e.curve.valid();
        e.ap = ap_r11(e.curve, grid);
        out.push_back(std::move(e));
      }
    }
  }
  return out;
}

std::string ap_report_json(const std::vector<ApEntry>& entries) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const ApEntry& e : entries) {
    j.push_back({{"mode", to_string(e.mode)},
                 {"threshold", e.threshold},
                 {"difficulty", to_string(e.difficulty)},
                 {"ap", e.ap},
                 {"valid", e.valid},
                 {"num_gt", e.curve.num_gt}});
  }
  return j.dump(2) + "\n";
}

std::string pr_curves_csv(const std::vector<ApEntry>& entries) {
  std::ostringstream out;
  out << "mode,threshold,difficulty,recall,precision\n";
  for (const ApEntry& e : entries) {
    for (const PrPoint& p : e.curve.points) {
      out << to_string(e.mode) << ',' << format_number(e.threshold) << ',' << to_string(e.difficulty) << ','
          << format_number(p.recall) << ',' << format_number(p.precision) << '\n';
    }
  }
  return out.str();
}

template float iou_2d<float>(const BasicRect<float>&, const BasicRect<float>&);
template double iou_2d<double>(const BasicRect<double>&, const BasicRect<double>&);
template float bev_intersection<float>(const RotatedRect<float>&, const RotatedRect<float>&);
template double bev_intersection<double>(const RotatedRect<double>&, const RotatedRect<double>&);
template float iou_bev<float>(const RotatedRect<float>&, const RotatedRect<float>&);
template double iou_bev<double>(const RotatedRect<double>&, const RotatedRect<double>&);

}  // namespace spikegate
