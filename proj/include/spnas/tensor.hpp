#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spnas {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when operand shapes disagree; the message names the offending dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
};
}  // namespace detail

/// Dense row-major f64 tensor with an optional gradient buffer.
///
/// Copies are shallow: two Tensor handles may refer to the same storage,
/// which is how parameters are shared between a model and its optimizer.
/// Use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }
  static Tensor full(Shape shape, double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const;
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() const { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool is_leaf() const { return node_->is_leaf; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  /// Gradient buffer, allocated (zeroed) on first access. Handles are shallow,
  /// so mutation through a const handle is permitted.
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

/// Records differentiable operations for a single reverse pass.
///
/// Operations append entries in execution order; backward() replays them in
/// reverse. A disabled tape records nothing and produces outputs that do not
/// require gradients (evaluation mode).
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  explicit Tape(bool enabled = true) : enabled_(enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool enabled() const { return enabled_; }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// True when an op over these inputs must be recorded.
  bool needs_grad(std::initializer_list<const Tensor*> inputs) const;

  /// Output tensor of a recorded op; requires_grad follows `track`.
  Tensor make_output(Shape shape, bool track) const;

  void record(Tensor output, BackwardFn fn);

  /// Reverse pass from a scalar loss. Leaf gradients accumulate across calls;
  /// intermediate gradients are reset at the start of every call.
  void backward(const Tensor& loss);

 private:
  struct Entry {
    Tensor output;
    BackwardFn fn;
  };
  bool enabled_;
  std::vector<Entry> entries_;
};

}  // namespace spnas
