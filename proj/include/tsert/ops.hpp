// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Every op validates shapes, rejects
// non-finite results, and records itself on the thread's tape when an operand
// requires grad and recording is enabled.
//
// Broadcasting is restricted to the suffix rule: a binary op accepts operands
// of equal shape, or operands where one shape is a trailing suffix of the
// other (bias vectors, positional tables). The shorter operand is repeated
// over the leading dimensions of the longer one.
#pragma once

#include <cstddef>
#include <vector>

#include "tsert/tensor.hpp"

namespace tsert::ops {

// a: [..., m, k]; b: [k, n] (shared across a's leading dims) or
// [..., k, n] with the same leading dims as a. 1-D a is treated as [1, k].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// Exact erf-based GELU.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);

// Mean over one axis; the axis is removed.
Tensor mean(const Tensor& x, int axis);
// Sum of every element, as a scalar.
Tensor sum(const Tensor& x);

// All operands must agree on every dimension except `axis`.
Tensor concat(const std::vector<Tensor>& parts, int axis);
// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& x, Shape shape);
// Contiguous range [start, start+length) along axis; the axis is kept.
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
// Gathers the listed positions along axis, in the listed order.
Tensor index_select(const Tensor& x, int axis, const std::vector<std::size_t>& indices);
// Repeats x over new leading dimensions; x.shape() must be a suffix of shape.
Tensor broadcast_to(const Tensor& x, const Shape& shape);

// Normalizes every last-axis slice: (x - mean) / sqrt(var + eps) * scale + shift,
// with the biased variance.
Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, double eps);

// Mean binary cross-entropy of probabilities p against 0/1 targets. p is
// clamped to [clamp_eps, 1 - clamp_eps]; clamped entries receive zero grad.
Tensor binary_cross_entropy(const Tensor& p, const std::vector<double>& targets,
                            double clamp_eps = 1e-7);

}  // namespace tsert::ops
