#include "spnas/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace spnas {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw ShapeError("tensor dimension " + std::to_string(i) + " is zero in shape " +
                       shape_str(shape));
    }
  }
  node_->data.assign(shape_numel(shape), 0.0);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : Tensor(std::move(shape), requires_grad) {
  if (values.size() != node_->data.size()) {
    throw ShapeError("tensor of shape " + shape_str(node_->shape) + " needs " +
                     std::to_string(node_->data.size()) + " values, got " +
                     std::to_string(values.size()));
  }
  node_->data = std::move(values);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  std::fill(t.node_->data.begin(), t.node_->data.end(), value);
  return t;
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= node_->shape.size()) {
    throw ShapeError("dimension index " + std::to_string(i) + " out of range for shape " +
                     shape_str(node_->shape));
  }
  return node_->shape[i];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on non-scalar tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

std::span<double> Tensor::mutable_grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() const {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t(node_->shape, node_->data, node_->requires_grad);
  t.node_->grad = node_->grad;
  return t;
}

bool Tape::needs_grad(std::initializer_list<const Tensor*> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t && t->defined() && t->requires_grad(); });
}

Tensor Tape::make_output(Shape shape, bool track) const {
  Tensor out(std::move(shape), track);
  out.node_->is_leaf = false;
  return out;
}

void Tape::record(Tensor output, BackwardFn fn) {
  if (!enabled_) return;
  entries_.push_back({std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (entries_.empty()) {
    throw std::logic_error("backward() on an empty tape");
  }
  for (auto& e : entries_) e.output.zero_grad();
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->fn();
  }
}

}  // namespace spnas
