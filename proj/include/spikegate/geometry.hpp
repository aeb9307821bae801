#pragma once

// Camera-frame box geometry (KITTI conventions: x right, y down, z forward;
// a box location is the centre of its bottom face; yaw rotates about +y).

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include <array>
#include <cmath>
#include <vector>

namespace spikegate {

template <typename Scalar>
struct BasicRect {
  Scalar left = 0;
  Scalar top = 0;
  Scalar right = 0;
  Scalar bottom = 0;

  Scalar width() const { return right - left; }
  Scalar height() const { return bottom - top; }
  Scalar area() const { return width() > 0 && height() > 0 ? width() * height() : Scalar(0); }
  bool operator==(const BasicRect&) const = default;
};

using Rect = BasicRect<double>;

struct CameraCalib {
  Eigen::Matrix<double, 3, 4> projection = Eigen::Matrix<double, 3, 4>::Zero();
  int width = 0;
  int height = 0;

  /// Pinhole intrinsics with zero translation column.
  static CameraCalib from_intrinsics(double fx, double fy, double cx, double cy, int width, int height);

  /// Throws std::invalid_argument unless both focal entries are positive.
  void validate() const;

  Eigen::Vector2d project(const Eigen::Vector3d& point) const;

  /// Camera-frame point at depth z whose projection is (u, v).
  Eigen::Vector3d unproject(const Eigen::Vector2d& pixel, double z) const;
};

struct Detection3D {
  int category = 0;
  double score = 1.0;
  Eigen::Vector3d location = Eigen::Vector3d::Zero();  // bottom-face centre, metres
  Eigen::Vector3d dims = Eigen::Vector3d::Ones();      // (h, w, l), metres
  double yaw = 0.0;                                    // rotation about +y, radians
  Rect box2d;                                          // pixels

  double height() const { return dims[0]; }
  double width() const { return dims[1]; }
  double length() const { return dims[2]; }
  /// Geometric centre (location shifted up by half the height).
  Eigen::Vector3d center() const { return location - Eigen::Vector3d(0, dims[0] / 2, 0); }
};

/// Bottom face first (y = location.y), then top face (y = location.y - h).
/// Within a face: (+l/2, +w/2), (-l/2, +w/2), (-l/2, -w/2), (+l/2, -w/2)
/// in the box frame, rotated by yaw about +y.
std::array<Eigen::Vector3d, 8> box3d_corners(const Detection3D& det);

/// Axis-aligned 2D box of the projected corners, clipped to the image.
Rect project_box(const Detection3D& det, const CameraCalib& calib);

double wrap_angle(double a);

/// Rectangle in the ground plane: centre, extent along its own axes, rotation
/// (counter-clockwise from the first axis).
template <typename Scalar>
struct RotatedRect {
  using Point = Eigen::Matrix<Scalar, 2, 1>;
  Scalar cx = 0;
  Scalar cy = 0;
  Scalar length = 1;
  Scalar width = 1;
  Scalar yaw = 0;

  /// Counter-clockwise corner loop.
  std::array<Point, 4> corners() const {
    const Scalar c = std::cos(yaw), s = std::sin(yaw);
    const Scalar hl = length / 2, hw = width / 2;
    const Scalar local[4][2] = {{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}};
    std::array<Point, 4> out;
    for (int i = 0; i < 4; ++i) {
      out[i] = Point(cx + c * local[i][0] - s * local[i][1], cy + s * local[i][0] + c * local[i][1]);
    }
    return out;
  }
  Scalar area() const { return length * width; }
};

/// Ground-plane footprint of a box as (x, z) with the matching rotation.
RotatedRect<double> bev_rect(const Detection3D& det);

template <typename Scalar>
using Polygon = std::vector<Eigen::Matrix<Scalar, 2, 1>>;

/// Shoelace formula; positive for counter-clockwise loops.
template <typename Scalar>
Scalar signed_area(const Polygon<Scalar>& poly) {
  Scalar a = 0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return a / 2;
}

/// Sutherland-Hodgman clipping of `subject` by the convex counter-clockwise
/// polygon `clip`.
template <typename Scalar>
Polygon<Scalar> clip_polygon(const Polygon<Scalar>& subject, const Polygon<Scalar>& clip) {
  using Point = Eigen::Matrix<Scalar, 2, 1>;
  Polygon<Scalar> output = subject;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Point a = clip[e];
    const Point b = clip[(e + 1) % m];
    const Point edge = b - a;
    auto side = [&](const Point& p) { return edge.x() * (p.y() - a.y()) - edge.y() * (p.x() - a.x()); };
    Polygon<Scalar> input;
    input.swap(output);
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point cur = input[i];
      const Point prev = input[(i + n - 1) % n];
      const Scalar sc = side(cur), sp = side(prev);
      if (sc >= 0) {
        if (sp < 0) output.push_back(prev + (cur - prev) * (sp / (sp - sc)));
        output.push_back(cur);
      } else if (sp >= 0) {
        output.push_back(prev + (cur - prev) * (sp / (sp - sc)));
      }
    }
  }
  return output;
}

}  // namespace spikegate
