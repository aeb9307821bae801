#include "spikegate/geometry.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace spikegate {

CameraCalib CameraCalib::from_intrinsics(double fx, double fy, double cx, double cy, int width, int height) {
  CameraCalib c;
  c.projection << fx, 0, cx, 0, 0, fy, cy, 0, 0, 0, 1, 0;
  c.width = width;
  c.height = height;
  c.validate();
  return c;
}

void CameraCalib::validate() const {
  if (!(projection(0, 0) > 0 && projection(1, 1) > 0)) {
    throw std::invalid_argument("camera calibration needs positive focal lengths");
  }
}

Eigen::Vector2d CameraCalib::project(const Eigen::Vector3d& point) const {
  const Eigen::Vector3d h = projection * point.homogeneous();
  return h.head<2>() / h[2];
}

Eigen::Vector3d CameraCalib::unproject(const Eigen::Vector2d& pixel, double z) const {
  // Rows r0 - u r2 and r1 - v r2 of P annihilate [x y z 1]; solve for x, y.
  const Eigen::RowVector4d r0 = projection.row(0) - pixel.x() * projection.row(2);
  const Eigen::RowVector4d r1 = projection.row(1) - pixel.y() * projection.row(2);
  Eigen::Matrix2d a;
  a << r0[0], r0[1], r1[0], r1[1];
  const Eigen::Vector2d b(-(r0[2] * z + r0[3]), -(r1[2] * z + r1[3]));
  const Eigen::Vector2d xy = a.partialPivLu().solve(b);
  return {xy.x(), xy.y(), z};
}

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  while (a > pi) a -= 2 * pi;
  while (a <= -pi) a += 2 * pi;
  return a;
}

std::array<Eigen::Vector3d, 8> box3d_corners(const Detection3D& det) {
  const double h = det.dims[0], w = det.dims[1], l = det.dims[2];
  const double c = std::cos(det.yaw), s = std::sin(det.yaw);
  const double xs[4] = {l / 2, -l / 2, -l / 2, l / 2};
  const double zs[4] = {w / 2, w / 2, -w / 2, -w / 2};
  std::array<Eigen::Vector3d, 8> out;
  for (int face = 0; face < 2; ++face) {
    const double y = face == 0 ? 0.0 : -h;
    for (int i = 0; i < 4; ++i) {
      out[face * 4 + i] = det.location + Eigen::Vector3d(c * xs[i] + s * zs[i], y, -s * xs[i] + c * zs[i]);
    }
  }
  return out;
}

Rect project_box(const Detection3D& det, const CameraCalib& calib) {
  Rect r{1e300, 1e300, -1e300, -1e300};
  for (const auto& corner : box3d_corners(det)) {
    const Eigen::Vector2d p = calib.project(corner);
    r.left = std::min(r.left, p.x());
    r.top = std::min(r.top, p.y());
    r.right = std::max(r.right, p.x());
    r.bottom = std::max(r.bottom, p.y());
  }
  if (calib.width > 0 && calib.height > 0) {
    r.left = std::clamp(r.left, 0.0, static_cast<double>(calib.width - 1));
    r.right = std::clamp(r.right, 0.0, static_cast<double>(calib.width - 1));
    r.top = std::clamp(r.top, 0.0, static_cast<double>(calib.height - 1));
    r.bottom = std::clamp(r.bottom, 0.0, static_cast<double>(calib.height - 1));
  }
  return r;
}

RotatedRect<double> bev_rect(const Detection3D& det) {
  // A yaw about +y turns (x, z) clockwise when z is drawn as the second axis.
  return {det.location.x(), det.location.z(), det.dims[2], det.dims[1], -det.yaw};
}

}  // namespace spikegate
