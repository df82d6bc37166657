// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major float64 tensors and the reverse-mode tape that records
// differentiable operations on them.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tsert/error.hpp"

namespace tsert {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  bool leaf = true;
  // Position on the producing tape; valid only while generation matches.
  const void* tape = nullptr;
  std::uint64_t generation = 0;
  std::size_t tape_index = 0;

  // Returns the gradient buffer, allocating zeros on first use.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  explicit operator bool() const { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Parameter storage for optimizers and initializers. Only valid on leaves.
  std::span<double> mutable_data();

  // Fresh leaf holding a copy of the values; never recorded.
  Tensor detach(bool requires_grad = false) const;

  bool same(const Tensor& other) const { return node_ == other.node_; }

  // Internal plumbing for op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Backward rule: reads out.grad and accumulates into each input that
// requires grad.
using BackwardFn =
    std::function<void(detail::Node& out, std::span<detail::Node* const> inputs)>;

/// Ordered record of differentiable ops executed on one thread.
///
/// Every op whose operands require grad appends an entry; backward() replays
/// the entries in reverse starting from the loss. A tape can be replayed once;
/// reset() clears it for the next step.
class Tape {
 public:
  struct Entry {
    const char* op;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::shared_ptr<detail::Node> output;
    BackwardFn backward;
  };

  // The calling thread's tape.
  static Tape& current();

  void reset();
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  std::span<const Entry> entries() const { return entries_; }

  void record(const char* op, std::vector<std::shared_ptr<detail::Node>> inputs,
              const std::shared_ptr<detail::Node>& output, BackwardFn backward);

  void backward(const Tensor& loss);

 private:
  std::vector<Entry> entries_;
  std::uint64_t generation_ = 1;
  bool consumed_ = false;
};

/// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Populates grad() of every requires_grad leaf reachable from a scalar loss.
void backward(const Tensor& loss);

// Throws NonFiniteError naming `op` if any value is NaN/Inf.
void check_finite(std::span<const double> values, const char* op);

}  // namespace tsert
