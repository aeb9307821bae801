#include "spikegate/kitti.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "spikegate/errors.hpp"

namespace spikegate {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
T parse_field(std::string_view text, const char* field) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError(std::string("KITTI field '") + field + "': cannot parse '" + std::string(text) + "'");
  }
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

KittiObject parse_kitti_line(std::string_view line) {
  const auto f = split_fields(line);
  if (f.size() != 15 && f.size() != 16) {
    throw FormatError("KITTI label line has " + std::to_string(f.size()) + " fields, expected 15 or 16");
  }
  KittiObject o;
  o.type = std::string(f[0]);
  o.truncated = parse_field<double>(f[1], "truncated");
  o.occluded = parse_field<int>(f[2], "occluded");
  o.alpha = parse_field<double>(f[3], "alpha");
  o.bbox.left = parse_field<double>(f[4], "left");
  o.bbox.top = parse_field<double>(f[5], "top");
  o.bbox.right = parse_field<double>(f[6], "right");
  o.bbox.bottom = parse_field<double>(f[7], "bottom");
  o.h = parse_field<double>(f[8], "height");
  o.w = parse_field<double>(f[9], "width");
  o.l = parse_field<double>(f[10], "length");
  o.x = parse_field<double>(f[11], "x");
  o.y = parse_field<double>(f[12], "y");
  o.z = parse_field<double>(f[13], "z");
  o.rotation_y = parse_field<double>(f[14], "rotation_y");
  if (f.size() == 16) o.score = parse_field<double>(f[15], "score");
  return o;
}

std::string format_kitti_line(const KittiObject& o) {
  std::string s = o.type;
  auto put = [&s](double v) {
    s += ' ';
    s += format_number(v);
  };
  put(o.truncated);
  s += ' ';
  s += std::to_string(o.occluded);
  for (double v : {o.alpha, o.bbox.left, o.bbox.top, o.bbox.right, o.bbox.bottom, o.h, o.w, o.l, o.x, o.y, o.z,
                   o.rotation_y}) {
    put(v);
  }
  if (o.score) put(*o.score);
  return s;
}

std::vector<KittiObject> read_kitti_labels(std::istream& in) {
  std::vector<KittiObject> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (split_fields(line).empty()) continue;
    try {
      out.push_back(parse_kitti_line(line));
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<KittiObject> read_kitti_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_kitti_labels(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_kitti_labels(std::ostream& out, const std::vector<KittiObject>& objects) {
  for (const auto& o : objects) out << format_kitti_line(o) << '\n';
}

void write_kitti_labels(const std::filesystem::path& path, const std::vector<KittiObject>& objects) {
  auto out = open_out(path);
  write_kitti_labels(out, objects);
}

CameraCalib read_kitti_calib(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    const auto f = split_fields(line);
    if (f.empty() || f[0] != "P2:") continue;
    if (f.size() != 13) throw FormatError("calib P2 line has " + std::to_string(f.size() - 1) + " values, expected 12");
    CameraCalib c;
    for (int i = 0; i < 12; ++i) c.projection(i / 4, i % 4) = parse_field<double>(f[static_cast<std::size_t>(i + 1)], "P2");
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("calib: ") + e.what());
    }
    return c;
  }
  throw FormatError("calib: no P2 line");
}

CameraCalib read_kitti_calib(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_kitti_calib(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_kitti_calib(std::ostream& out, const CameraCalib& calib) {
  // The other KITTI matrices are written as copies so standard tooling accepts the file.
  for (const char* key : {"P0:", "P1:", "P2:", "P3:"}) {
    out << key;
    for (int i = 0; i < 12; ++i) out << ' ' << format_number(calib.projection(i / 4, i % 4));
    out << '\n';
  }
}

void write_kitti_calib(const std::filesystem::path& path, const CameraCalib& calib) {
  auto out = open_out(path);
  write_kitti_calib(out, calib);
}

int category_id(std::string_view type) {
  if (type == "Car") return 0;
  if (type == "Pedestrian") return 1;
  if (type == "Cyclist") return 2;
  return -1;
}

const char* category_name(int id) {
  switch (id) {
    case 0: return "Car";
    case 1: return "Pedestrian";
    case 2: return "Cyclist";
    default: return "DontCare";
  }
}

Detection3D to_detection(const KittiObject& o) {
  Detection3D d;
  d.category = category_id(o.type);
  d.score = o.score.value_or(1.0);
  d.location = {o.x, o.y, o.z};
  d.dims = {o.h, o.w, o.l};
  d.yaw = o.rotation_y;
  d.box2d = o.bbox;
  return d;
}

KittiObject to_kitti(const Detection3D& d, bool with_score) {
  KittiObject o;
  o.type = category_name(d.category);
  o.alpha = wrap_angle(d.yaw - std::atan2(d.location.x(), d.location.z()));
  o.bbox = d.box2d;
  o.h = d.dims[0];
  o.w = d.dims[1];
  o.l = d.dims[2];
  o.x = d.location.x();
  o.y = d.location.y();
  o.z = d.location.z();
  o.rotation_y = d.yaw;
  if (with_score) o.score = d.score;
  return o;
}

}  // namespace spikegate
