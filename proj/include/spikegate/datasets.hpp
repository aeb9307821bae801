#pragma once

// Image classification data (CIFAR-10 binary batches or a synthetic
// stand-in) and synthetic driving scenes with 3D box labels.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "spikegate/geometry.hpp"
#include "spikegate/init.hpp"
#include "spikegate/kitti.hpp"
#include "spikegate/tensor.hpp"

namespace spikegate {

struct ClassificationData {
  Index channels = 3;
  Index height = 32;
  Index width = 32;
  std::vector<float> images;  // [N, C, H, W]
  std::vector<int> labels;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index image_numel() const { return channels * height * width; }
  /// Gathers the listed samples into [n, C, H, W], optionally mirrored.
  Tensor batch(const std::vector<Index>& indices, const std::vector<bool>* flip = nullptr) const;
  std::vector<int> batch_labels(const std::vector<Index>& indices) const;
  /// Samples [begin, end).
  ClassificationData subset(Index begin, Index end) const;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;

struct CifarRecord {
  std::uint8_t label = 0;
  std::array<std::uint8_t, 3072> pixels{};  // planar R, G, B; rows of 32
  bool operator==(const CifarRecord&) const = default;
};

inline constexpr std::size_t kCifarBatchRecords = 10000;

/// Throws FormatError with the byte offset of an incomplete or corrupt record.
/// With `expected_records` set, any other length is rejected as well.
std::vector<CifarRecord> read_cifar_records(std::istream& in, std::optional<std::size_t> expected_records = {});
std::vector<CifarRecord> read_cifar_records(const std::filesystem::path& path,
                                            std::optional<std::size_t> expected_records = {});
void write_cifar_records(std::ostream& out, const std::vector<CifarRecord>& records);
void write_cifar_records(const std::filesystem::path& path, const std::vector<CifarRecord>& records);

/// Pixels scaled to [0, 1], then standardized per channel over the set.
ClassificationData to_classification_data(const std::vector<CifarRecord>& records);

/// Reads data_batch_1..5.bin (train) or test_batch.bin from `dir`.
ClassificationData load_cifar10(const std::filesystem::path& dir, bool train = true);

/// Each class is a fixed random arrangement of coloured blobs; samples are
/// jittered by up to one pixel, rescaled in contrast and perturbed by noise.
ClassificationData make_synthetic_classification(Index samples, std::uint64_t seed, int classes = 10,
                                                 Index size = 16);

struct SceneOptions {
  int width = 128;
  int height = 64;
  int min_boxes = 1;
  int max_boxes = 6;
};

struct SyntheticScene {
  CameraCalib calib;
  std::vector<Detection3D> boxes;
  std::vector<KittiObject> labels;  // same boxes with truncation and occlusion
  std::vector<float> image;         // [3, height, width]
};

/// Camera scaled down from a KITTI left colour camera.
CameraCalib synthetic_camera(const SceneOptions& options = {});

/// Depth drawn from the depth prior, truncated symmetrically so its mean is
/// preserved; dimensions jittered around the size prior.
Detection3D sample_box(Rng& rng, const CameraCalib& calib);

/// Throws std::invalid_argument when n < 1.
std::vector<SyntheticScene> gen_synthetic_scenes(int n, std::uint64_t seed, const SceneOptions& options = {});

/// Writes label_2/NNNNNN.txt, calib/NNNNNN.txt and image_2/NNNNNN.ppm.
void write_scene_dataset(const std::filesystem::path& dir, const std::vector<SyntheticScene>& scenes);

/// Stacks scene images into [n, 3, H, W].
Tensor scene_batch(const std::vector<SyntheticScene>& scenes, const std::vector<Index>& indices);

}  // namespace spikegate
