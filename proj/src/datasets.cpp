#include "spikegate/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <stdexcept>

#include "spikegate/detect.hpp"
#include "spikegate/errors.hpp"

namespace spikegate {

Tensor ClassificationData::batch(const std::vector<Index>& indices, const std::vector<bool>* flip) const {
  const Index n = static_cast<Index>(indices.size()), per = image_numel();
  Tensor::Vector v(n * per);
  for (Index i = 0; i < n; ++i) {
    const Index src = indices[static_cast<std::size_t>(i)];
    if (src < 0 || src >= size()) throw std::out_of_range("sample index " + std::to_string(src) + " out of range");
    const float* in = images.data() + src * per;
    float* out = v.data() + i * per;
    if (flip && (*flip)[static_cast<std::size_t>(i)]) {
      for (Index p = 0; p < channels * height; ++p) {
        for (Index x = 0; x < width; ++x) out[p * width + x] = in[p * width + (width - 1 - x)];
      }
    } else {
      std::copy(in, in + per, out);
    }
  }
  return Tensor({n, channels, height, width}, std::move(v));
}

std::vector<int> ClassificationData::batch_labels(const std::vector<Index>& indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (Index i : indices) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

ClassificationData ClassificationData::subset(Index begin, Index end) const {
  if (begin < 0 || end > size() || begin > end) throw std::out_of_range("subset range out of bounds");
  ClassificationData d;
  d.channels = channels;
  d.height = height;
  d.width = width;
  d.labels.assign(labels.begin() + begin, labels.begin() + end);
  d.images.assign(images.begin() + begin * image_numel(), images.begin() + end * image_numel());
  return d;
}

std::vector<CifarRecord> read_cifar_records(std::istream& in, std::optional<std::size_t> expected_records) {
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw FormatError("CIFAR-10 batch is empty");
  const std::size_t whole = bytes.size() / kCifarRecordBytes;
  if (expected_records && bytes.size() > *expected_records * kCifarRecordBytes) {
    throw FormatError("CIFAR-10 batch has trailing bytes from byte offset " +
                      std::to_string(*expected_records * kCifarRecordBytes));
  }
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10 batch truncated: record at byte offset " + std::to_string(whole * kCifarRecordBytes) +
                      " has " + std::to_string(bytes.size() % kCifarRecordBytes) + " of " +
                      std::to_string(kCifarRecordBytes) + " bytes");
  }
  if (expected_records && whole != *expected_records) {
    throw FormatError("CIFAR-10 batch truncated: ends at byte offset " + std::to_string(bytes.size()) + " after " +
                      std::to_string(whole) + " of " + std::to_string(*expected_records) + " records");
  }
  std::vector<CifarRecord> out(whole);
  for (std::size_t r = 0; r < whole; ++r) {
    const std::size_t offset = r * kCifarRecordBytes;
    const auto label = static_cast<std::uint8_t>(bytes[offset]);
    if (label > 9) {
      throw FormatError("CIFAR-10 corrupt record at byte offset " + std::to_string(offset) + ": label " +
                        std::to_string(label));
    }
    out[r].label = label;
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(offset + 1), 3072, out[r].pixels.begin());
  }
  return out;
}

std::vector<CifarRecord> read_cifar_records(const std::filesystem::path& path,
                                            std::optional<std::size_t> expected_records) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return read_cifar_records(in, expected_records);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_cifar_records(std::ostream& out, const std::vector<CifarRecord>& records) {
  for (const auto& r : records) {
    out.put(static_cast<char>(r.label));
    out.write(reinterpret_cast<const char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
  }
}

void write_cifar_records(const std::filesystem::path& path, const std::vector<CifarRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_cifar_records(out, records);
}

ClassificationData to_classification_data(const std::vector<CifarRecord>& records) {
  ClassificationData d;
  d.channels = 3;
  d.height = d.width = 32;
  const std::size_t n = records.size();
  d.images.resize(n * 3072);
  d.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    d.labels[r] = records[r].label;
    for (std::size_t p = 0; p < 3072; ++p) d.images[r * 3072 + p] = static_cast<float>(records[r].pixels[p]) / 255.0f;
  }
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t p = 0; p < 1024; ++p) {
        const double v = d.images[r * 3072 + c * 1024 + p];
        s += v;
        s2 += v * v;
      }
    }
    const double count = static_cast<double>(n) * 1024.0;
    const double mean = count > 0 ? s / count : 0.0;
    const double sd = count > 0 ? std::sqrt(std::max(s2 / count - mean * mean, 0.0)) : 1.0;
    const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t p = 0; p < 1024; ++p) {
        float& v = d.images[r * 3072 + c * 1024 + p];
        v = static_cast<float>((v - mean) * inv);
      }
    }
  }
  return d;
}

ClassificationData load_cifar10(const std::filesystem::path& dir, bool train) {
  std::vector<CifarRecord> all;
  if (train) {
    for (int i = 1; i <= 5; ++i) {
      auto part = read_cifar_records(dir / ("data_batch_" + std::to_string(i) + ".bin"), kCifarBatchRecords);
      all.insert(all.end(), part.begin(), part.end());
    }
  } else {
    all = read_cifar_records(dir / "test_batch.bin", kCifarBatchRecords);
  }
  return to_classification_data(all);
}

ClassificationData make_synthetic_classification(Index samples, std::uint64_t seed, int classes, Index size) {
  if (samples < 1) throw std::invalid_argument("synthetic classification needs at least one sample");
  Rng rng(seed);
  const Index c = 3, hw = size * size;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);

  std::vector<std::vector<double>> templates(static_cast<std::size_t>(classes), std::vector<double>(c * hw, 0.0));
  for (auto& t : templates) {
    for (int blob = 0; blob < 3; ++blob) {
      const double cy = unit(rng) * static_cast<double>(size - 1), cx = unit(rng) * static_cast<double>(size - 1);
      const double sigma = 1.5 + unit(rng) * static_cast<double>(size) / 6.0;
      const double color[3] = {sym(rng), sym(rng), sym(rng)};
      for (Index ch = 0; ch < c; ++ch) {
        for (Index y = 0; y < size; ++y) {
          for (Index x = 0; x < size; ++x) {
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            t[ch * hw + y * size + x] += 1.5 * color[ch] * std::exp(-d2 / (2 * sigma * sigma));
          }
        }
      }
    }
  }

  ClassificationData d;
  d.channels = c;
  d.height = d.width = size;
  d.images.resize(static_cast<std::size_t>(samples * c * hw));
  d.labels.resize(static_cast<std::size_t>(samples));
  std::uniform_int_distribution<int> label_dist(0, classes - 1);
  std::uniform_int_distribution<int> shift(-1, 1);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (Index s = 0; s < samples; ++s) {
    const int label = label_dist(rng);
    d.labels[static_cast<std::size_t>(s)] = label;
    const int dy = shift(rng), dx = shift(rng);
    const double contrast = 0.8 + 0.4 * unit(rng);
    const auto& t = templates[static_cast<std::size_t>(label)];
    float* out = d.images.data() + s * c * hw;
    for (Index ch = 0; ch < c; ++ch) {
      for (Index y = 0; y < size; ++y) {
        for (Index x = 0; x < size; ++x) {
          const Index sy = std::clamp<Index>(y - dy, 0, size - 1), sx = std::clamp<Index>(x - dx, 0, size - 1);
          out[ch * hw + y * size + x] = static_cast<float>(contrast * t[ch * hw + sy * size + sx] + noise(rng));
        }
      }
    }
  }
  return d;
}

CameraCalib synthetic_camera(const SceneOptions& o) {
  const double f = 721.5377 * o.width / 1242.0;
  return CameraCalib::from_intrinsics(f, f, o.width / 2.0, o.height / 2.0, o.width, o.height);
}

Detection3D sample_box(Rng& rng, const CameraCalib& calib) {
  const Priors priors;
  std::normal_distribution<double> depth(priors.depth_mean, priors.depth_std);
  std::normal_distribution<double> log_scale(0.0, 0.08);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double span = 1.4 * priors.depth_std;
  double z;
  do {
    z = depth(rng);
  } while (std::abs(z - priors.depth_mean) > span);

  Detection3D d;
  d.category = 0;
  d.dims = Eigen::Vector3d(priors.dims[0] * std::exp(log_scale(rng)), priors.dims[1] * std::exp(log_scale(rng)),
                           priors.dims[2] * std::exp(log_scale(rng)));
  const double u = (0.05 + 0.9 * unit(rng)) * calib.width;
  const double fx = calib.projection(0, 0), cx = calib.projection(0, 2);
  d.location = Eigen::Vector3d((u - cx) * z / fx, 1.65, z);
  d.yaw = wrap_angle((2 * unit(rng) - 1) * std::numbers::pi);
  d.box2d = project_box(d, calib);
  return d;
}

namespace {

Rect unclipped_box(const Detection3D& d, const CameraCalib& calib) {
  CameraCalib open = calib;
  open.width = open.height = 0;
  return project_box(d, open);
}

void render(SyntheticScene& s, const SceneOptions& o) {
  const int w = o.width, h = o.height;
  const double horizon = s.calib.projection(1, 2);
  s.image.assign(static_cast<std::size_t>(3 * w * h), 0.0f);
  for (int y = 0; y < h; ++y) {
    const float ground = y >= horizon ? static_cast<float>(0.2 + 0.3 * (y - horizon) / (h - horizon)) : 0.1f;
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) s.image[static_cast<std::size_t>((c * h + y) * w + x)] = ground;
    }
  }
  std::vector<std::size_t> order(s.boxes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s.boxes[a].location.z() > s.boxes[b].location.z(); });
  std::vector<int> owner(static_cast<std::size_t>(w * h), -1);
  std::vector<int> painted(s.boxes.size(), 0);
  for (std::size_t i : order) {
    const Detection3D& d = s.boxes[i];
    const Rect r = d.box2d;
    const double alpha = wrap_angle(d.yaw - std::atan2(d.location.x(), d.location.z()));
    const float shade[3] = {static_cast<float>(std::clamp(1.0 - d.location.z() / 60.0, 0.1, 1.0)),
                            static_cast<float>(0.5 + 0.4 * std::sin(alpha)),
                            static_cast<float>(0.5 + 0.4 * std::cos(alpha))};
    const int x0 = static_cast<int>(std::ceil(r.left)), x1 = static_cast<int>(std::floor(r.right));
    const int y0 = static_cast<int>(std::ceil(r.top)), y1 = static_cast<int>(std::floor(r.bottom));
    const double roof = r.top + r.height() / 3.0;
    for (int y = std::max(y0, 0); y <= std::min(y1, h - 1); ++y) {
      for (int x = std::max(x0, 0); x <= std::min(x1, w - 1); ++x) {
        const float dim = y < roof ? 0.7f : 1.0f;
        for (int c = 0; c < 3; ++c) s.image[static_cast<std::size_t>((c * h + y) * w + x)] = shade[c] * dim;
        owner[static_cast<std::size_t>(y * w + x)] = static_cast<int>(i);
        ++painted[i];
      }
    }
  }
  std::vector<int> visible(s.boxes.size(), 0);
  for (int o_id : owner) {
    if (o_id >= 0) ++visible[static_cast<std::size_t>(o_id)];
  }
  s.labels.clear();
  for (std::size_t i = 0; i < s.boxes.size(); ++i) {
    KittiObject k = to_kitti(s.boxes[i], false);
    const Rect full = unclipped_box(s.boxes[i], s.calib);
    const double full_area = full.area();
    k.truncated = full_area > 0 ? std::clamp(1.0 - s.boxes[i].box2d.area() / full_area, 0.0, 1.0) : 1.0;
    const double frac = painted[i] > 0 ? static_cast<double>(visible[i]) / painted[i] : 0.0;
    k.occluded = frac >= 0.9 ? 0 : (frac >= 0.5 ? 1 : 2);
    s.labels.push_back(k);
  }
}

}  // namespace

std::vector<SyntheticScene> gen_synthetic_scenes(int n, std::uint64_t seed, const SceneOptions& options) {
  if (n < 1) throw std::invalid_argument("gen_synthetic_scenes: n must be >= 1");
  if (options.min_boxes < 1 || options.max_boxes < options.min_boxes) {
    throw std::invalid_argument("gen_synthetic_scenes: bad box count range");
  }
  Rng rng(seed);
  std::uniform_int_distribution<int> count(options.min_boxes, options.max_boxes);
  std::vector<SyntheticScene> scenes(static_cast<std::size_t>(n));
  for (auto& s : scenes) {
    s.calib = synthetic_camera(options);
    const int k = count(rng);
    for (int i = 0; i < k; ++i) s.boxes.push_back(sample_box(rng, s.calib));
    render(s, options);
  }
  return scenes;
}

void write_scene_dataset(const std::filesystem::path& dir, const std::vector<SyntheticScene>& scenes) {
  namespace fs = std::filesystem;
  for (const char* sub : {"label_2", "calib", "image_2"}) fs::create_directories(dir / sub);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char stem[16];
    std::snprintf(stem, sizeof stem, "%06zu", i);
    const auto& s = scenes[i];
    write_kitti_labels(dir / "label_2" / (std::string(stem) + ".txt"), s.labels);
    write_kitti_calib(dir / "calib" / (std::string(stem) + ".txt"), s.calib);
    std::ofstream img(dir / "image_2" / (std::string(stem) + ".ppm"), std::ios::binary);
    if (!img) throw FormatError("cannot write image " + std::string(stem));
    const int w = s.calib.width, h = s.calib.height;
    img << "P6\n" << w << ' ' << h << "\n255\n";
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          const float v = std::clamp(s.image[static_cast<std::size_t>((c * h + y) * w + x)], 0.0f, 1.0f);
          img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
        }
      }
    }
  }
}

Tensor scene_batch(const std::vector<SyntheticScene>& scenes, const std::vector<Index>& indices) {
  if (indices.empty()) throw std::invalid_argument("scene_batch: no scenes selected");
  const auto& first = scenes.at(static_cast<std::size_t>(indices[0]));
  const Index h = first.calib.height, w = first.calib.width, per = 3 * h * w;
  Tensor::Vector v(static_cast<Index>(indices.size()) * per);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& s = scenes.at(static_cast<std::size_t>(indices[i]));
    if (s.calib.height != h || s.calib.width != w) throw ShapeError("scene_batch: scenes differ in size");
    std::copy(s.image.begin(), s.image.end(), v.data() + static_cast<Index>(i) * per);
  }
  return Tensor({static_cast<Index>(indices.size()), 3, h, w}, std::move(v));
}

}  // namespace spikegate
