#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spikegate {

/// Tensor extents do not fit the operation. The message names the axes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file or stream (checkpoint, CIFAR batch, KITTI text, config).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the autodiff tape (second backward, detached loss, ...).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace spikegate
