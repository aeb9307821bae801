#include "spikegate/tensor.hpp"

#include <sstream>

namespace spikegate {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Scalar>
BasicTensor<Scalar>::BasicTensor(Shape shape, Vector values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] < 1) {
      throw ShapeError("axis " + std::to_string(i) + " of shape " + to_string(shape) +
                       " is not a positive extent");
    }
  }
  if (spikegate::numel(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " holds " + std::to_string(spikegate::numel(shape)) +
                     " elements but " + std::to_string(values.size()) + " values were given");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
BasicTensor<Scalar> BasicTensor<Scalar>::zeros(const Shape& shape) {
  return BasicTensor(shape, Vector::Zero(spikegate::numel(shape)));
}

template <typename Scalar>
BasicTensor<Scalar> BasicTensor<Scalar>::ones(const Shape& shape) {
  return BasicTensor(shape, Vector::Ones(spikegate::numel(shape)));
}

template <typename Scalar>
BasicTensor<Scalar> BasicTensor<Scalar>::full(const Shape& shape, Scalar value) {
  return BasicTensor(shape, Vector::Constant(spikegate::numel(shape), value));
}

template <typename Scalar>
BasicTensor<Scalar> BasicTensor<Scalar>::from_values(const Shape& shape,
                                                     std::initializer_list<Scalar> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar x : values) v[i++] = x;
  return BasicTensor(shape, std::move(v));
}

template <typename Scalar>
Index BasicTensor<Scalar>::dim(Index axis) const {
  const Index r = rank();
  const Index a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  }
  return node_->shape[static_cast<std::size_t>(a)];
}

template <typename Scalar>
Scalar BasicTensor<Scalar>::at(std::initializer_list<Index> index) const {
  if (static_cast<Index>(index.size()) != rank()) {
    throw ShapeError("index of rank " + std::to_string(index.size()) + " into shape " + to_string(shape()));
  }
  Index flat = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    const Index extent = node_->shape[axis];
    if (i < 0 || i >= extent) {
      throw ShapeError("index " + std::to_string(i) + " out of range on axis " + std::to_string(axis) +
                       " of shape " + to_string(shape()));
    }
    flat = flat * extent + i;
    ++axis;
  }
  return node_->value[flat];
}

template <typename Scalar>
Scalar BasicTensor<Scalar>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

template <typename Scalar>
BasicTensor<Scalar>& BasicTensor<Scalar>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename Scalar>
BasicTensor<Scalar> BasicTensor<Scalar>::detach() const {
  return BasicTensor(node_->shape, node_->value);
}

template <typename Scalar>
BasicTape<Scalar>*& active_tape_slot() {
  thread_local BasicTape<Scalar>* tape = nullptr;
  return tape;
}

template <typename Scalar>
BasicTape<Scalar>* active_tape() {
  return active_tape_slot<Scalar>();
}

template <typename Scalar>
BasicTapeScope<Scalar>::BasicTapeScope(BasicTape<Scalar>& tape) : previous_(active_tape_slot<Scalar>()) {
  active_tape_slot<Scalar>() = &tape;
}

template <typename Scalar>
BasicTapeScope<Scalar>::~BasicTapeScope() {
  active_tape_slot<Scalar>() = previous_;
}

template <typename Scalar>
void backward(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& loss) {
  if (tape.consumed()) throw TapeError("backward called twice on the same tape without reset()");
  if (loss.numel() != 1) throw TapeError("backward needs a scalar loss, got shape " + to_string(loss.shape()));

  const auto& records = tape.records();
  const auto* target = loss.node().get();
  bool produced = false;
  for (const auto& rec : records) {
    if (rec.output.get() == target) {
      produced = true;
      break;
    }
  }
  if (!produced) throw TapeError("loss tensor was not produced on this tape (detached node)");

  loss.node()->grad_buffer().setOnes();
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (!it->output->has_grad()) continue;
    it->backward(it->output->grad);
  }
  tape.mark_consumed();
}

template <typename Scalar>
BasicTensor<Scalar> record_op(Shape shape, typename BasicTensor<Scalar>::Vector value,
                              const std::vector<BasicTensor<Scalar>>& inputs,
                              std::function<void(const typename BasicTensor<Scalar>::Vector&)> grad_fn) {
#ifndef NDEBUG
  bool finite_inputs = true;
  for (const auto& in : inputs) finite_inputs = finite_inputs && in.values().allFinite();
  if (finite_inputs && !value.allFinite()) throw NumericError("non-finite output from finite inputs");
#endif
  BasicTensor<Scalar> out(std::move(shape), std::move(value));
  BasicTape<Scalar>* tape = active_tape<Scalar>();
  if (tape == nullptr) return out;

  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  if (!needs_grad) return out;

  out.set_requires_grad(true);
  typename BasicTape<Scalar>::Record rec;
  rec.inputs.reserve(inputs.size());
  for (const auto& in : inputs) rec.inputs.push_back(in.node());
  rec.output = out.node();
  rec.backward = std::move(grad_fn);
  tape->record(std::move(rec));
  return out;
}

#define SPIKEGATE_INSTANTIATE(S)                                                                    \
  template class BasicTensor<S>;                                                                    \
  template BasicTape<S>* active_tape<S>();                                                          \
  template class BasicTapeScope<S>;                                                                 \
  template void backward<S>(BasicTape<S>&, const BasicTensor<S>&);                                  \
  template BasicTensor<S> record_op<S>(Shape, BasicTensor<S>::Vector, const std::vector<BasicTensor<S>>&, \
                                       std::function<void(const BasicTensor<S>::Vector&)>);

SPIKEGATE_INSTANTIATE(float)
SPIKEGATE_INSTANTIATE(double)

#undef SPIKEGATE_INSTANTIATE

}  // namespace spikegate
