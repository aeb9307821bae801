#pragma once

// Flat binary weight container:
//   "SGK1"
//   repeated until EOF:
//     u32 name length, UTF-8 name, u32 rank, u32 extent * rank, f32 data * numel
// All integers and floats little-endian.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "spikegate/tensor.hpp"

namespace spikegate {

template <typename Scalar>
struct BasicNamedTensor {
  std::string name;
  BasicTensor<Scalar> tensor;
};

using NamedTensor = BasicNamedTensor<float>;

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& params);
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& params);

std::vector<NamedTensor> read_checkpoint(std::istream& is);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Copies loaded values into `params` by name. Every parameter must be
/// present with an identical shape.
void restore_parameters(const std::vector<NamedTensor>& params, const std::vector<NamedTensor>& loaded);

}  // namespace spikegate
