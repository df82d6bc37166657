// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "tsert/gradcheck.hpp"
#include "tsert/model.hpp"

namespace tsert {

/// Finite-difference check of every parameter of `model` (and of its input)
/// through the BCE loss of one forward pass. max_per_tensor == 0 probes every
/// element.
std::vector<GradCheck> check_model_gradients(const TsertModel& model, const Tensor& x,
                                             const std::vector<int>& labels, double eps = 1e-5,
                                             double tolerance = 1e-4,
                                             std::size_t max_per_tensor = 0);

/// Every differentiable primitive, the encoder building blocks, and the
/// reduced-size model variants, at eps 1e-5 and relative tolerance 1e-4.
std::vector<GradCheck> run_gradcheck_suite(std::uint64_t seed = 7);

}  // namespace tsert
