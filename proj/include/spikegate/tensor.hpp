#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// A BasicTensor is a cheap handle onto a shared node that owns the values and
// (optionally) an accumulated gradient. Operations record themselves on the
// thread's active Tape when at least one input requires a gradient; with no
// tape active they produce detached results.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "spikegate/errors.hpp"

namespace spikegate {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename Scalar>
struct TensorNode {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Shape shape;
  Vector value;
  Vector grad;  // empty until something is accumulated
  bool requires_grad = false;

  bool has_grad() const { return grad.size() != 0; }

  Vector& grad_buffer() {
    if (!has_grad()) grad = Vector::Zero(value.size());
    return grad;
  }
};

template <typename Scalar>
class BasicTensor {
 public:
  using scalar_type = Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Node = TensorNode<Scalar>;

  BasicTensor() = default;
  BasicTensor(Shape shape, Vector values, bool requires_grad = false);

  static BasicTensor zeros(const Shape& shape);
  static BasicTensor ones(const Shape& shape);
  static BasicTensor full(const Shape& shape, Scalar value);
  static BasicTensor from_values(const Shape& shape, std::initializer_list<Scalar> values);

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  /// Extent of one axis; negative axes count from the back.
  Index dim(Index axis) const;
  Index numel() const { return node_->value.size(); }

  const Vector& values() const { return node_->value; }
  /// Direct write access. Reserved for parameter updates between steps.
  Vector& mutable_values() { return node_->value; }

  Scalar operator[](Index flat) const { return node_->value[flat]; }
  Scalar at(std::initializer_list<Index> index) const;
  Scalar item() const;

  bool requires_grad() const { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on);
  bool has_grad() const { return node_->has_grad(); }
  const Vector& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0); }

  /// Value copy that does not participate in differentiation.
  BasicTensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using Tensor = BasicTensor<float>;

template <typename Scalar>
class BasicTape {
 public:
  using NodePtr = std::shared_ptr<TensorNode<Scalar>>;
  using Vector = typename TensorNode<Scalar>::Vector;

  struct Record {
    std::vector<NodePtr> inputs;
    NodePtr output;
    std::function<void(const Vector& grad_out)> backward;
  };

  void record(Record rec) { records_.push_back(std::move(rec)); }
  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

  void mark_consumed() { consumed_ = true; }

  /// Drops all records so the tape can serve another step.
  void reset() {
    records_.clear();
    consumed_ = false;
  }

 private:
  std::vector<Record> records_;
  bool consumed_ = false;
};

using Tape = BasicTape<float>;

/// Tape currently receiving records on this thread, or nullptr.
template <typename Scalar>
BasicTape<Scalar>* active_tape();

/// Makes `tape` the recording target of this thread for the scope's lifetime.
template <typename Scalar>
class BasicTapeScope {
 public:
  explicit BasicTapeScope(BasicTape<Scalar>& tape);
  ~BasicTapeScope();
  BasicTapeScope(const BasicTapeScope&) = delete;
  BasicTapeScope& operator=(const BasicTapeScope&) = delete;

 private:
  BasicTape<Scalar>* previous_;
};

using TapeScope = BasicTapeScope<float>;

/// Reverse sweep from a scalar loss. Leaf gradients accumulate; the tape is
/// consumed and must be reset before it can be swept again.
template <typename Scalar>
void backward(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& loss);

/// Builds the result of a custom operation and, when any input requires a
/// gradient and a tape is active, records `grad_fn` on that tape. `grad_fn`
/// receives the gradient of the output and is responsible for accumulating
/// into its inputs (see accumulate_grad).
template <typename Scalar>
BasicTensor<Scalar> record_op(Shape shape, typename BasicTensor<Scalar>::Vector value,
                              const std::vector<BasicTensor<Scalar>>& inputs,
                              std::function<void(const typename BasicTensor<Scalar>::Vector&)> grad_fn);

/// Adds `g` into the gradient of `t` if `t` requires one.
template <typename Scalar, typename Derived>
void accumulate_grad(const BasicTensor<Scalar>& t, const Eigen::MatrixBase<Derived>& g) {
  if (!t.requires_grad()) return;
  t.node()->grad_buffer() += g;
}

/// True when every element is exactly 0 or 1.
template <typename Scalar>
bool is_binary(const BasicTensor<Scalar>& t) {
  return ((t.values().array() == Scalar(0)) || (t.values().array() == Scalar(1))).all();
}

template <typename To, typename From>
BasicTensor<To> cast(const BasicTensor<From>& t) {
  return BasicTensor<To>(t.shape(), t.values().template cast<To>());
}

}  // namespace spikegate
