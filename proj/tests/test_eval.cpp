#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numbers>

#include <json.hpp>

#include "spikegate/eval.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace spikegate;

namespace {

using oracle::box2d_config;
using oracle::car;
using oracle::monte_carlo_iou;
using oracle::RRect;

// Occupancy test written against the corner convention: undo the yaw that
// box3d_corners applies to (x, z) and compare with the half extents.
bool inside_box(const Detection3D& d, const Eigen::Vector3d& p) {
  const double dx = p.x() - d.location.x(), dz = p.z() - d.location.z();
  const double c = std::cos(d.yaw), s = std::sin(d.yaw);
  const double along = c * dx - s * dz, across = s * dx + c * dz;
  return std::abs(along) <= d.length() / 2 && std::abs(across) <= d.width() / 2 && p.y() <= d.location.y() &&
         p.y() >= d.location.y() - d.height();
}

double voxel_iou(const Detection3D& a, const Detection3D& b, double res) {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(1e300), hi = Eigen::Vector3d::Constant(-1e300);
  for (const auto* d : {&a, &b}) {
    for (const auto& c : box3d_corners(*d)) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  long both = 0, either = 0;
  for (double x = lo.x() + res / 2; x < hi.x(); x += res)
    for (double y = lo.y() + res / 2; y < hi.y(); y += res)
      for (double z = lo.z() + res / 2; z < hi.z(); z += res) {
        const Eigen::Vector3d p(x, y, z);
        const bool ia = inside_box(a, p), ib = inside_box(b, p);
        both += ia && ib;
        either += ia || ib;
      }
  return static_cast<double>(both) / static_cast<double>(either);
}

Detection3D random_box(Rng& rng, double spread) {
  std::uniform_real_distribution<double> off(-spread, spread), d(0.6, 2.0), a(-3.1, 3.1);
  Detection3D b;
  b.location = {off(rng), 1.5 + off(rng) / 2, 20 + off(rng)};
  b.dims = {d(rng), d(rng), d(rng)};
  b.yaw = a(rng);
  return b;
}

}  // namespace

TEST_CASE("2D IoU") {
  const Rect unit{0, 0, 1, 1};
  CHECK(iou_2d(unit, unit) == 1.0);
  CHECK(iou_2d(unit, Rect{2, 2, 3, 3}) == 0.0);
  CHECK(iou_2d(unit, Rect{1, 0, 2, 1}) == 0.0);
  CHECK(iou_2d(unit, Rect{0.5, 0, 1.5, 1}) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(iou_2d(unit, Rect{0.5, 0.5, 0.5, 2}) == 0.0);
  CHECK(iou_2d(Rect{0.5, 0.5, 0.5, 2}, Rect{0.5, 0.5, 0.5, 2}) == 0.0);
  CHECK(iou_2d(BasicRect<float>{0, 0, 2, 2}, BasicRect<float>{1, 0, 3, 2}) == doctest::Approx(1.0 / 3));
}

TEST_CASE("bird's-eye IoU") {
  const RRect sq{0, 0, 1, 1, 0};
  RRect turned = sq;
  turned.yaw = 2 * std::numbers::pi;
  CHECK(iou_bev(sq, turned) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(iou_bev(sq, RRect{3, 0, 1, 1, 0.3}) == 0.0);

  RRect diamond = sq;
  diamond.yaw = std::numbers::pi / 4;
  const double overlap_area = 2 * (std::sqrt(2.0) - 1);
  CHECK(bev_intersection(sq, diamond) == doctest::Approx(overlap_area).epsilon(1e-12));
  const double iou = overlap_area / (2 - overlap_area);
  CHECK(iou == doctest::Approx(0.7071).epsilon(1e-4));
  CHECK(iou_bev(sq, diamond) == doctest::Approx(iou).epsilon(1e-12));
  Rng rng(21);
  CHECK(std::abs(monte_carlo_iou(sq, diamond, rng, 1000000) - iou) < 1e-2);

  for (int trial = 0; trial < 100; ++trial) {
    const RRect a = oracle::random_rect(rng), b = oracle::random_rect(rng);
    const double got = iou_bev(a, b);
    CAPTURE(trial);
    CHECK(std::abs(got - monte_carlo_iou(a, b, rng, 1000000)) < 1e-2);
    CHECK(std::abs(got - iou_bev(b, a)) < 1e-12);
    for (double s : {0.01, 3.0, 250.0}) {
      const RRect as{a.cx * s, a.cy * s, a.length * s, a.width * s, a.yaw};
      const RRect bs{b.cx * s, b.cy * s, b.length * s, b.width * s, b.yaw};
      CHECK(std::abs(iou_bev(as, bs) - got) < 1e-9);
    }
  }
  const RotatedRect<float> fa{0, 0, 1, 1, 0}, fb{0.5f, 0, 1, 1, 0};
  CHECK(iou_bev(fa, fb) == doctest::Approx(1.0 / 3).epsilon(1e-6));
}

TEST_CASE("3D IoU") {
  Rng rng(22);
  const Detection3D a = random_box(rng, 0);
  CHECK(iou_3d(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  Detection3D up = a;
  up.location.y() -= a.height();
  CHECK(iou_3d(a, up) == 0.0);
  up.location.y() -= 0.5;
  CHECK(iou_3d(a, up) == 0.0);
  Detection3D half = a;
  half.location.y() -= a.height() / 2;
  CHECK(iou_3d(a, half) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  for (int trial = 0; trial < 30; ++trial) {
    const Detection3D p = random_box(rng, 0.8), q = random_box(rng, 0.8);
    CAPTURE(trial);
    const double got = iou_3d(p, q);
    CHECK(std::abs(got - voxel_iou(p, q, 0.02)) < 2e-2);
    CHECK(std::abs(got - iou_3d(q, p)) < 1e-12);
    for (double s : {0.1, 7.0}) {
      Detection3D ps = p, qs = q;
      ps.location *= s;
      ps.dims *= s;
      qs.location *= s;
      qs.dims *= s;
      CHECK(std::abs(iou_3d(ps, qs) - got) < 1e-9);
    }
  }
}

TEST_CASE("IoU symmetry across modes on KITTI records") {
  Rng rng(23);
  std::uniform_real_distribution<double> u(0, 30);
  for (int trial = 0; trial < 200; ++trial) {
    KittiObject a = car(u(rng), u(rng)), b = car(u(rng), u(rng));
    b.rotation_y = u(rng) / 10;
    b.bbox.right += u(rng);
    for (IouMode m : {IouMode::box2d, IouMode::bev, IouMode::box3d}) {
      CHECK(std::abs(overlap(a, b, m) - overlap(b, a, m)) < 1e-12);
    }
  }
}

TEST_CASE("matching by hand") {
  SUBCASE("two ground truths with hit, miss, hit") {
    ImageEval img;
    img.gts = {car(0, 0), car(300, 0)};
    img.dets = {car(0, 0, 0.9), car(600, 100, 0.8), car(300, 0, 0.7)};
    const PrCurve c = match_and_pr({img}, box2d_config());
    REQUIRE(c.points.size() == 3);
    CHECK(c.points[0] == PrPoint{0.5, 1.0});
    CHECK(c.points[1] == PrPoint{0.5, 0.5});
    CHECK(c.points[2].recall == 1.0);
    CHECK(c.points[2].precision == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(interpolated_precision(c, 0.5) == 1.0);
    CHECK(interpolated_precision(c, 0.6) == doctest::Approx(2.0 / 3));
    CHECK(ap_r11(c) == doctest::Approx((6 + 5 * 2.0 / 3) / 11).epsilon(1e-12));
    CHECK(std::abs(ap_r11(c) - 0.8485) < 1e-4);
    CHECK(ap_r11(c, RecallGrid::r11_no_zero) == doctest::Approx((5 + 5 * 2.0 / 3) / 10).epsilon(1e-12));
  }
  SUBCASE("perfect detections") {
    ImageEval img;
    img.gts = {car(0, 0)};
    img.dets = {car(0, 0, 0.5)};
    const PrCurve c = match_and_pr({img}, box2d_config());
    REQUIRE(c.points.size() == 1);
    CHECK(c.points[0] == PrPoint{1.0, 1.0});
    CHECK(ap_r11(c) == 1.0);
  }
  SUBCASE("duplicates are false positives") {
    ImageEval img;
    img.gts = {car(0, 0)};
    img.dets = {car(0, 0, 0.9), car(0, 0, 0.8)};
    const PrCurve c = match_and_pr({img}, box2d_config());
    CHECK(c.true_positives == 1);
    CHECK(c.false_positives == 1);
  }
  SUBCASE("highest overlap wins") {
    ImageEval img;
    img.gts = {car(10, 0), car(0, 0)};
    img.dets = {car(2, 0, 0.9), car(10, 0, 0.5)};
    const PrCurve c = match_and_pr({img}, box2d_config(0.5));
    CHECK(c.true_positives == 2);
  }
  SUBCASE("no detections and no ground truth") {
    ImageEval img;
    img.gts = {car(0, 0)};
    const PrCurve empty_dets = match_and_pr({img}, box2d_config());
    CHECK(empty_dets.valid());
    CHECK(ap_r11(empty_dets) == 0.0);
    ImageEval none;
    none.dets = {car(0, 0, 0.9)};
    const PrCurve no_gt = match_and_pr({none}, box2d_config());
    CHECK_FALSE(no_gt.valid());
    CHECK(no_gt.points.empty());
    CHECK(ap_r11(no_gt) == 0.0);
  }
  SUBCASE("difficulty and category filters") {
    ImageEval img;
    KittiObject small = car(0, 0);
    small.bbox.bottom = small.bbox.top + 30;  // moderate and hard only
    KittiObject occluded = car(300, 0);
    occluded.occluded = 2;  // hard only
    KittiObject person = car(600, 0);
    person.type = "Pedestrian";
    img.gts = {small, occluded, person};
    KittiObject small_det = small, occluded_det = occluded, person_det = person;
    small_det.score = 0.9;
    occluded_det.score = 0.8;
    person_det.score = 0.7;
    img.dets = {small_det, occluded_det, person_det};
    MatchConfig cfg = box2d_config();
    cfg.difficulty = Difficulty::easy;
    PrCurve c = match_and_pr({img}, cfg);
    CHECK(c.num_gt == 0);
    CHECK(c.false_positives == 0);
    cfg.difficulty = Difficulty::moderate;
    c = match_and_pr({img}, cfg);
    CHECK(c.num_gt == 1);
    CHECK(c.true_positives == 1);
    CHECK(c.false_positives == 0);
    CHECK(c.points.size() == 1);
    cfg.difficulty = Difficulty::hard;
    c = match_and_pr({img}, cfg);
    CHECK(c.num_gt == 2);
    CHECK(ap_r11(c) == 1.0);
    cfg.category = "Pedestrian";
    c = match_and_pr({img}, cfg);
    CHECK(c.num_gt == 1);
    CHECK(c.true_positives == 1);
  }
  MatchConfig bad = box2d_config(0.0);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("difficulty rules") {
  const DifficultyRules rules;
  KittiObject o = car(0, 0);
  o.bbox.bottom = o.bbox.top + 40;
  CHECK(rules.admits(o, Difficulty::easy));
  o.truncated = 0.2;
  CHECK_FALSE(rules.admits(o, Difficulty::easy));
  CHECK(rules.admits(o, Difficulty::moderate));
  o.bbox.bottom = o.bbox.top + 20;
  CHECK_FALSE(rules.admits(o, Difficulty::hard));
  CHECK(rules.scaled_heights(0.5).admits(o, Difficulty::hard));
}

TEST_CASE("AP against the definition on 1000 random sets") {
  Rng rng(24);
  for (int trial = 0; trial < 1000; ++trial) {
    const oracle::RandomApSet r = oracle::random_ap_set(rng);
    const auto& set = r.images;
    const auto& claimed = r.claimed;
    const PrCurve c = match_and_pr(set, box2d_config());
    CAPTURE(trial);
    CHECK(c.num_gt == r.num_gt);
    CHECK(std::abs(ap_r11(c) - oracle::brute_force_ap(r.ranked, r.num_gt, 0)) < 1e-12);
    CHECK(std::abs(ap_r11(c, RecallGrid::r11_no_zero) - oracle::brute_force_ap(r.ranked, r.num_gt, 1)) < 1e-12);
    for (int level = 1; level <= 10; ++level) {
      CHECK(interpolated_precision(c, level / 10.0) <= interpolated_precision(c, (level - 1) / 10.0));
    }
    for (std::size_t k = 1; k < c.points.size(); ++k) CHECK(c.points[k].recall >= c.points[k - 1].recall);

    // A new top-scored detection of a missed ground truth.
    for (std::size_t i = 0; i < set.size(); ++i) {
      const auto miss = std::find(claimed[i].begin(), claimed[i].end(), false);
      if (miss == claimed[i].end()) continue;
      std::vector<ImageEval> more = set;
      more[i].dets.push_back(car(100.0 * static_cast<double>(miss - claimed[i].begin()), 0, 2.0));
      const PrCurve c2 = match_and_pr(more, box2d_config());
      CHECK(c2.true_positives == c.true_positives + 1);
      CHECK(ap_r11(c2) >= ap_r11(c));
      break;
    }
  }
}

TEST_CASE("report outputs") {
  ImageEval img;
  img.gts = {car(0, 0), car(300, 0)};
  img.dets = {car(0, 0, 0.9), car(600, 100, 0.8), car(300, 0, 0.7)};
  const auto entries = evaluate_all({img}, "Car", DifficultyRules{});
  CHECK(entries.size() == 18);
  const auto j = nlohmann::json::parse(ap_report_json(entries));
  REQUIRE(j.size() == 18);
  CHECK(j[0]["mode"] == "2d");
  CHECK(j[0]["threshold"] == 0.5);
  CHECK(j[0]["difficulty"] == "easy");
  CHECK(j[0]["ap"].get<double>() == doctest::Approx((6 + 5 * 2.0 / 3) / 11));
  CHECK(j[0]["valid"] == true);
  const std::string csv = pr_curves_csv(entries);
  CHECK(csv.rfind("mode,threshold,difficulty,recall,precision\n", 0) == 0);
  CHECK(csv.find("2d,0.5,easy,0.5,1\n") != std::string::npos);
  CHECK(std::string(to_string(IouMode::bev)) == "bev");
  CHECK(std::string(to_string(Difficulty::hard)) == "hard");
}
