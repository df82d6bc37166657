// SPDX-License-Identifier: Apache-2.0
#include "tsert/tensor.hpp"

#include <cmath>
#include <sstream>

namespace tsert {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void check_finite(std::span<const double> values, const char* op) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << op << ": non-finite value " << values[i] << " at flat index " << i;
      throw NonFiniteError(os.str());
    }
  }
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

namespace {

thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values,
                                        bool requires_grad) {
  for (auto s : shape) {
    if (s == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  check_finite(values, "tensor");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = tsert::numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_node({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         to_string(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() { node_->grad.clear(); }

std::span<double> Tensor::mutable_data() {
  if (!node_->leaf) throw TapeError("mutable_data() on a non-leaf tensor");
  return node_->data;
}

Tensor Tensor::detach(bool requires_grad) const {
  return Tensor(make_node(node_->shape, node_->data, requires_grad));
}

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::reset() {
  entries_.clear();
  ++generation_;
  consumed_ = false;
}

void Tape::record(const char* op, std::vector<std::shared_ptr<detail::Node>> inputs,
                  const std::shared_ptr<detail::Node>& output, BackwardFn backward) {
  output->leaf = false;
  output->tape = this;
  output->generation = generation_;
  output->tape_index = entries_.size();
  entries_.push_back({op, std::move(inputs), output, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss) throw TapeError("backward on an empty tensor");
  if (loss.numel() != 1 || loss.rank() > 1) {
    throw TapeError("backward requires a scalar loss, got " + to_string(loss.shape()));
  }
  const auto& node = loss.node();
  if (node->leaf || node->tape != this || node->generation != generation_) {
    throw TapeError("loss is detached: it was not produced by an op on the current tape");
  }
  if (consumed_) throw TapeError("backward already ran on this tape; reset() it first");
  consumed_ = true;

  node->grad.assign(1, 1.0);
  std::vector<detail::Node*> raw;
  for (std::size_t i = node->tape_index + 1; i-- > 0;) {
    auto& entry = entries_[i];
    if (entry.output->grad.empty()) continue;
    raw.clear();
    for (auto& in : entry.inputs) raw.push_back(in.get());
    entry.backward(*entry.output, raw);
    for (auto* in : raw) {
      if (!in->grad.empty()) check_finite(in->grad, entry.op);
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

void backward(const Tensor& loss) { Tape::current().backward(loss); }

}  // namespace tsert
