// SPDX-License-Identifier: Apache-2.0
#include "tsert/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tsert {

namespace {

double eval_scalar(const Tensor& out) {
  if (out.numel() != 1) throw DimensionError("gradient check needs a scalar function, got " +
                                             to_string(out.shape()));
  return out.item();
}

}  // namespace

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double eps) {
  NoGradGuard guard;
  std::vector<double> values(x.data().begin(), x.data().end());
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + eps;
    const double up = eval_scalar(f(Tensor::from(x.shape(), values)));
    values[i] = orig - eps;
    const double down = eval_scalar(f(Tensor::from(x.shape(), values)));
    values[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return Tensor::from(x.shape(), std::move(grad));
}

GradCheck check_gradients(const std::string& name, const MultiScalarFn& f,
                          const std::vector<Tensor>& inputs, double eps, double tolerance,
                          std::size_t max_elements) {
  GradCheck result{name};
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const auto& in : inputs) leaves.push_back(in.detach(true));

  auto& tape = Tape::current();
  tape.reset();
  const Tensor out = f(leaves);
  backward(out);
  tape.reset();

  NoGradGuard guard;
  for (std::size_t which = 0; which < leaves.size(); ++which) {
    const auto& leaf = leaves[which];
    const std::size_t n = leaf.numel();
    const std::size_t stride =
        max_elements == 0 || n <= max_elements ? 1 : (n + max_elements - 1) / max_elements;
    std::vector<double> values(leaf.data().begin(), leaf.data().end());
    for (std::size_t i = 0; i < n; i += stride) {
      auto probe = [&](double delta) {
        std::vector<Tensor> args;
        for (std::size_t j = 0; j < leaves.size(); ++j) {
          if (j != which) {
            args.push_back(leaves[j]);
            continue;
          }
          auto shifted = values;
          shifted[i] += delta;
          args.push_back(Tensor::from(leaf.shape(), std::move(shifted)));
        }
        return eval_scalar(f(args));
      };
      const double numeric = (probe(eps) - probe(-eps)) / (2.0 * eps);
      const double analytic = leaf.has_grad() ? leaf.grad()[i] : 0.0;
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      result.max_error = std::max(result.max_error, err);
      ++result.checked;
    }
  }
  result.passed = result.max_error < tolerance;
  return result;
}

}  // namespace tsert
