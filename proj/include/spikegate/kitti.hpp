#pragma once

// KITTI object label and calibration text files.
//
// Label line: type truncated occluded alpha left top right bottom h w l x y z
// rotation_y [score]. Numbers are written in shortest round-trip form so a
// parsed-then-written line reproduces every field exactly.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spikegate/geometry.hpp"

namespace spikegate {

struct KittiObject {
  std::string type = "DontCare";
  double truncated = 0;
  int occluded = 0;
  double alpha = 0;
  Rect bbox;
  double h = 0, w = 0, l = 0;
  double x = 0, y = 0, z = 0;
  double rotation_y = 0;
  std::optional<double> score;

  bool operator==(const KittiObject&) const = default;
};

/// Throws FormatError naming the offending field.
KittiObject parse_kitti_line(std::string_view line);
std::string format_kitti_line(const KittiObject& obj);

std::vector<KittiObject> read_kitti_labels(std::istream& in);
std::vector<KittiObject> read_kitti_labels(const std::filesystem::path& path);
void write_kitti_labels(std::ostream& out, const std::vector<KittiObject>& objects);
void write_kitti_labels(const std::filesystem::path& path, const std::vector<KittiObject>& objects);

/// Reads the "P2:" line. Image extents are left at zero.
CameraCalib read_kitti_calib(std::istream& in);
CameraCalib read_kitti_calib(const std::filesystem::path& path);
void write_kitti_calib(std::ostream& out, const CameraCalib& calib);
void write_kitti_calib(const std::filesystem::path& path, const CameraCalib& calib);

/// "Car" is 0, "Pedestrian" 1, "Cyclist" 2; anything else -1.
int category_id(std::string_view type);
const char* category_name(int id);

Detection3D to_detection(const KittiObject& obj);
KittiObject to_kitti(const Detection3D& det, bool with_score);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

}  // namespace spikegate
