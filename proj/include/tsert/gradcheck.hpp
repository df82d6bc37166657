// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tsert/tensor.hpp"

namespace tsert {

using ScalarFn = std::function<Tensor(const Tensor&)>;

/// Central-difference gradient of a scalar-valued f at x, element by element.
/// f is evaluated with tape recording disabled.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double eps);

struct GradCheck {
  std::string name;
  double max_error = 0.0;  // max |analytic - numeric| / max(1, |numeric|)
  std::size_t checked = 0;
  bool passed = false;
};

using MultiScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares tape gradients of f w.r.t. every input against central
/// differences. Inputs are re-created as leaves that require grad; the
/// current thread's tape is reset before and after. At most `max_elements`
/// entries per input are probed (evenly strided) to bound runtime.
GradCheck check_gradients(const std::string& name, const MultiScalarFn& f,
                          const std::vector<Tensor>& inputs, double eps = 1e-5,
                          double tolerance = 1e-4, std::size_t max_elements = 0);

}  // namespace tsert
