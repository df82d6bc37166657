// SPDX-License-Identifier: Apache-2.0
#include "tsert/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace tsert::ops {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Tensor finish(const char* op, Shape shape, std::vector<double> data,
              std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  check_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto* in : inputs) needs = needs || in->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    std::vector<NodePtr> nodes;
    nodes.reserve(inputs.size());
    for (const auto* in : inputs) nodes.push_back(in->node());
    Tape::current().record(op, std::move(nodes), node, std::move(fn));
  }
  return Tensor(node);
}

Tensor finish_many(const char* op, Shape shape, std::vector<double> data,
                   const std::vector<Tensor>& inputs, BackwardFn fn) {
  check_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  const bool needs = grad_enabled() && std::any_of(inputs.begin(), inputs.end(),
                                                   [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    std::vector<NodePtr> nodes;
    for (const auto& in : inputs) nodes.push_back(in.node());
    Tape::current().record(op, std::move(nodes), node, std::move(fn));
  }
  return Tensor(node);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw DimensionError(message);
}

void require_defined(const Tensor& t, const char* op) {
  if (!t) throw DimensionError(std::string(op) + ": undefined tensor operand");
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  require(a >= 0 && a < r, std::string(op) + ": axis " + std::to_string(axis) +
                               " invalid for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

// Splits a shape around an axis into (outer, axis length, inner).
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

bool is_suffix(const Shape& shorter, const Shape& longer) {
  return shorter.size() <= longer.size() &&
         std::equal(shorter.rbegin(), shorter.rend(), longer.rbegin());
}

Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw DimensionError(std::string(op) + ": cannot broadcast " + to_string(a.shape()) +
                       " with " + to_string(b.shape()));
}

// out = a[j % na] (op) b[j % nb]; the derivative callbacks receive the
// operand values at j and return d(out)/d(a) and d(out)/d(b).
template <typename F, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  require_defined(a, op);
  require_defined(b, op);
  Shape shape = broadcast_shape(a, b, op);
  const std::size_t n = numel(shape), na = a.numel(), nb = b.numel();
  std::vector<double> out(n);
  const auto av = a.data(), bv = b.data();
  for (std::size_t j = 0; j < n; ++j) out[j] = f(av[j % na], bv[j % nb]);
  return finish(op, std::move(shape), std::move(out), {&a, &b},
                [n, na, nb, da, db](Node& o, std::span<Node* const> in) {
                  Node& x = *in[0];
                  Node& y = *in[1];
                  if (x.requires_grad) {
                    auto& g = x.grad_buffer();
                    for (std::size_t j = 0; j < n; ++j)
                      g[j % na] += o.grad[j] * da(x.data[j % na], y.data[j % nb]);
                  }
                  if (y.requires_grad) {
                    auto& g = y.grad_buffer();
                    for (std::size_t j = 0; j < n; ++j)
                      g[j % nb] += o.grad[j] * db(x.data[j % na], y.data[j % nb]);
                  }
                });
}

template <typename F, typename D>
Tensor unary(const char* op, const Tensor& x, F f, D derivative) {
  require_defined(x, op);
  const std::size_t n = x.numel();
  std::vector<double> out(n);
  const auto xv = x.data();
  for (std::size_t j = 0; j < n; ++j) out[j] = f(xv[j]);
  return finish(op, x.shape(), std::move(out), {&x},
                [n, derivative](Node& o, std::span<Node* const> in) {
                  Node& a = *in[0];
                  if (!a.requires_grad) return;
                  auto& g = a.grad_buffer();
                  for (std::size_t j = 0; j < n; ++j)
                    g[j] += o.grad[j] * derivative(a.data[j], o.data[j]);
                });
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
      ci[p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * gi[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const std::string shapes = to_string(a.shape()) + " and " + to_string(b.shape());
  require(a.rank() >= 2 && b.rank() >= 2, "matmul: operands must have rank >= 2, got " + shapes);
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  require(b.dim(-2) == k, "matmul: inner dimensions differ for " + shapes);
  const bool shared_b = b.rank() == 2;
  if (!shared_b) {
    require(b.rank() == a.rank() &&
                std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()),
            "matmul: batch dimensions differ for " + shapes);
  }
  const std::size_t batch = a.numel() / (m * k);
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  shape.push_back(n);
  std::vector<double> out(batch * m * n, 0.0);
  const double* av = a.data().data();
  const double* bv = b.data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    gemm_nn(av + s * m * k, shared_b ? bv : bv + s * k * n, out.data() + s * m * n, m, k, n);
  }
  return finish("matmul", std::move(shape), std::move(out), {&a, &b},
                [batch, m, k, n, shared_b](Node& o, std::span<Node* const> in) {
                  Node& x = *in[0];
                  Node& y = *in[1];
                  const double* g = o.grad.data();
                  if (x.requires_grad) {
                    double* gx = x.grad_buffer().data();
                    for (std::size_t s = 0; s < batch; ++s) {
                      const double* yb = shared_b ? y.data.data() : y.data.data() + s * k * n;
                      gemm_nt(g + s * m * n, yb, gx + s * m * k, m, k, n);
                    }
                  }
                  if (y.requires_grad) {
                    double* gy = y.grad_buffer().data();
                    for (std::size_t s = 0; s < batch; ++s) {
                      gemm_tn(x.data.data() + s * m * k, g + s * m * n,
                              shared_b ? gy : gy + s * k * n, m, k, n);
                    }
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor gelu(const Tensor& x) {
  return unary(
      "gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
        return cdf + v * pdf;
      });
}

Tensor sigmoid(const Tensor& x) {
  // Clamped to the open interval so probabilities never round to exactly 0 or 1.
  static constexpr double lo = std::numeric_limits<double>::min();
  static constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return unary(
      "sigmoid", x,
      [](double v) {
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        return std::clamp(s, lo, hi);
      },
      [](double, double s) { return s * (1.0 - s); });
}

Tensor softmax(const Tensor& x, int axis) {
  require_defined(x, "softmax");
  const auto ax = normalize_axis(axis, x.rank(), "softmax");
  const auto sp = split_at(x.shape(), ax);
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, xv[base + l * sp.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) {
        const double e = std::exp(xv[base + l * sp.inner] - mx);
        out[base + l * sp.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < sp.len; ++l) out[base + l * sp.inner] /= total;
    }
  }
  return finish("softmax", x.shape(), std::move(out), {&x},
                [sp](Node& o, std::span<Node* const> in) {
                  Node& a = *in[0];
                  if (!a.requires_grad) return;
                  auto& g = a.grad_buffer();
                  for (std::size_t oo = 0; oo < sp.outer; ++oo) {
                    for (std::size_t i = 0; i < sp.inner; ++i) {
                      const std::size_t base = oo * sp.len * sp.inner + i;
                      double dot = 0.0;
                      for (std::size_t l = 0; l < sp.len; ++l) {
                        const auto j = base + l * sp.inner;
                        dot += o.grad[j] * o.data[j];
                      }
                      for (std::size_t l = 0; l < sp.len; ++l) {
                        const auto j = base + l * sp.inner;
                        g[j] += o.data[j] * (o.grad[j] - dot);
                      }
                    }
                  }
                });
}

Tensor mean(const Tensor& x, int axis) {
  require_defined(x, "mean");
  const auto ax = normalize_axis(axis, x.rank(), "mean");
  const auto sp = split_at(x.shape(), ax);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const auto xv = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.len; ++l)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += xv[(o * sp.len + l) * sp.inner + i];
  for (auto& v : out) v /= static_cast<double>(sp.len);
  return finish("mean", std::move(shape), std::move(out), {&x},
                [sp](Node& o, std::span<Node* const> in) {
                  Node& a = *in[0];
                  if (!a.requires_grad) return;
                  auto& g = a.grad_buffer();
                  const double w = 1.0 / static_cast<double>(sp.len);
                  for (std::size_t oo = 0; oo < sp.outer; ++oo)
                    for (std::size_t l = 0; l < sp.len; ++l)
                      for (std::size_t i = 0; i < sp.inner; ++i)
                        g[(oo * sp.len + l) * sp.inner + i] += o.grad[oo * sp.inner + i] * w;
                });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  const auto xv = x.data();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return finish("sum", {}, {total}, {&x}, [](Node& o, std::span<Node* const> in) {
    Node& a = *in[0];
    if (!a.requires_grad) return;
    for (auto& g : a.grad_buffer()) g += o.grad[0];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), "concat: no operands");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& first = parts.front().shape();
  const auto ax = normalize_axis(axis, first.size(), "concat");
  std::vector<std::size_t> lens;
  std::size_t total_len = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == first.size();
    for (std::size_t d = 0; ok && d < first.size(); ++d) ok = d == ax || p.shape()[d] == first[d];
    require(ok, "concat: " + to_string(p.shape()) + " incompatible with " + to_string(first) +
                    " along axis " + std::to_string(axis));
    lens.push_back(p.shape()[ax]);
    total_len += p.shape()[ax];
  }
  Shape shape = first;
  shape[ax] = total_len;
  const auto sp = split_at(shape, ax);
  std::vector<double> out(numel(shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto pv = parts[p].data();
    const std::size_t chunk = lens[p] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * sp.len * sp.inner + offset));
    offset += chunk;
  }
  return finish_many("concat", std::move(shape), std::move(out), parts,
                     [sp, lens](Node& o, std::span<Node* const> in) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < in.size(); ++p) {
                         const std::size_t chunk = lens[p] * sp.inner;
                         if (in[p]->requires_grad) {
                           auto& g = in[p]->grad_buffer();
                           for (std::size_t oo = 0; oo < sp.outer; ++oo)
                             for (std::size_t j = 0; j < chunk; ++j)
                               g[oo * chunk + j] += o.grad[oo * sp.len * sp.inner + off + j];
                         }
                         off += chunk;
                       }
                     });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  require_defined(x, "permute");
  const std::size_t r = x.rank();
  require(axes.size() == r, "permute: axis list length differs from rank of " + to_string(x.shape()));
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    require(a < r && !seen[a], "permute: axes must be a permutation of 0..rank-1");
    seen[a] = true;
  }
  Shape shape(r);
  for (std::size_t i = 0; i < r; ++i) shape[i] = x.shape()[axes[i]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.shape()[i];
  const std::size_t n = x.numel();
  // src[j] = flat input index feeding flat output index j
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> counter(r, 0);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < r; ++i) idx += counter[i] * in_strides[axes[i]];
    src[j] = idx;
    for (std::size_t i = r; i-- > 0;) {
      if (++counter[i] < shape[i]) break;
      counter[i] = 0;
    }
  }
  std::vector<double> out(n);
  const auto xv = x.data();
  for (std::size_t j = 0; j < n; ++j) out[j] = xv[src[j]];
  return finish("permute", std::move(shape), std::move(out), {&x},
                [src = std::move(src)](Node& o, std::span<Node* const> in) {
                  Node& a = *in[0];
                  if (!a.requires_grad) return;
                  auto& g = a.grad_buffer();
                  for (std::size_t j = 0; j < src.size(); ++j) g[src[j]] += o.grad[j];
                });
}

Tensor transpose(const Tensor& x) {
  require_defined(x, "transpose");
  require(x.rank() >= 2, "transpose: rank must be >= 2, got " + to_string(x.shape()));
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[x.rank() - 1], axes[x.rank() - 2]);
  return permute(x, axes);
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  require(numel(shape) == x.numel() &&
              std::none_of(shape.begin(), shape.end(), [](std::size_t s) { return s == 0; }),
          "reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return finish("reshape", std::move(shape), std::move(out), {&x},
                [](Node& o, std::span<Node* const> in) {
                  Node& a = *in[0];
                  if (!a.requires_grad) return;
                  auto& g = a.grad_buffer();
                  for (std::size_t j = 0; j < g.size(); ++j) g[j] += o.grad[j];
                });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  require_defined(x, "slice");
  const auto ax = normalize_axis(axis, x.rank(), "slice");
  const auto sp = split_at(x.shape(), ax);
  require(length > 0 && start + length <= sp.len,
          "slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
              ") out of bounds for " + to_string(x.shape()));
  Shape shape = x.shape();
  shape[ax] = length;
  std::vector<double> out(sp.outer * length * sp.inner);
  const auto xv = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * sp.len + start) * sp.inner),
                length * sp.inner, out.begin() + static_cast<std::ptrdiff_t>(o * length * sp.inner));
  return finish("slice", std::move(shape), std::move(out), {&x},
                [sp, start, length](Node& o, std::span<Node* const> in) {
                  Node& a = *in[0];
                  if (!a.requires_grad) return;
                  auto& g = a.grad_buffer();
                  for (std::size_t oo = 0; oo < sp.outer; ++oo)
                    for (std::size_t j = 0; j < length * sp.inner; ++j)
                      g[(oo * sp.len + start) * sp.inner + j] += o.grad[oo * length * sp.inner + j];
                });
}

Tensor index_select(const Tensor& x, int axis, const std::vector<std::size_t>& indices) {
  require_defined(x, "index_select");
  const auto ax = normalize_axis(axis, x.rank(), "index_select");
  const auto sp = split_at(x.shape(), ax);
  require(!indices.empty(), "index_select: empty index list");
  for (auto i : indices) {
    require(i < sp.len, "index_select: index " + std::to_string(i) + " out of range for " +
                            to_string(x.shape()));
  }
  Shape shape = x.shape();
  shape[ax] = indices.size();
  const std::size_t m = indices.size();
  std::vector<double> out(sp.outer * m * sp.inner);
  const auto xv = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < m; ++l)
      std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * sp.len + indices[l]) * sp.inner),
                  sp.inner, out.begin() + static_cast<std::ptrdiff_t>((o * m + l) * sp.inner));
  return finish("index_select", std::move(shape), std::move(out), {&x},
                [sp, indices](Node& o, std::span<Node* const> in) {
                  Node& a = *in[0];
                  if (!a.requires_grad) return;
                  auto& g = a.grad_buffer();
                  const std::size_t mm = indices.size();
                  for (std::size_t oo = 0; oo < sp.outer; ++oo)
                    for (std::size_t l = 0; l < mm; ++l)
                      for (std::size_t i = 0; i < sp.inner; ++i)
                        g[(oo * sp.len + indices[l]) * sp.inner + i] +=
                            o.grad[(oo * mm + l) * sp.inner + i];
                });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  require_defined(x, "broadcast_to");
  require(is_suffix(x.shape(), shape),
          "broadcast_to: " + to_string(x.shape()) + " is not a suffix of " + to_string(shape));
  const std::size_t n = numel(shape), nx = x.numel();
  std::vector<double> out(n);
  const auto xv = x.data();
  for (std::size_t j = 0; j < n; ++j) out[j] = xv[j % nx];
  return finish("broadcast_to", shape, std::move(out), {&x},
                [n, nx](Node& o, std::span<Node* const> in) {
                  Node& a = *in[0];
                  if (!a.requires_grad) return;
                  auto& g = a.grad_buffer();
                  for (std::size_t j = 0; j < n; ++j) g[j % nx] += o.grad[j];
                });
}

Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, double eps) {
  require_defined(x, "layer_norm");
  require(eps > 0.0, "layer_norm: eps must be positive");
  require(x.rank() >= 1, "layer_norm: scalar input");
  const std::size_t d = x.dim(-1);
  require(scale.shape() == Shape{d} && shift.shape() == Shape{d},
          "layer_norm: scale/shift must be [" + std::to_string(d) + "], got " +
              to_string(scale.shape()) + " and " + to_string(shift.shape()));
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel()), xhat(x.numel()), rstd(rows);
  const auto xv = x.data(), sv = scale.data(), bv = shift.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (row[i] - mu) * rstd[r];
      xhat[r * d + i] = h;
      out[r * d + i] = h * sv[i] + bv[i];
    }
  }
  return finish("layer_norm", x.shape(), std::move(out), {&x, &scale, &shift},
                [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](
                    Node& o, std::span<Node* const> in) {
                  Node& a = *in[0];
                  Node& s = *in[1];
                  Node& b = *in[2];
                  if (s.requires_grad) {
                    auto& g = s.grad_buffer();
                    for (std::size_t j = 0; j < rows * d; ++j) g[j % d] += o.grad[j] * xhat[j];
                  }
                  if (b.requires_grad) {
                    auto& g = b.grad_buffer();
                    for (std::size_t j = 0; j < rows * d; ++j) g[j % d] += o.grad[j];
                  }
                  if (!a.requires_grad) return;
                  auto& g = a.grad_buffer();
                  const double inv_d = 1.0 / static_cast<double>(d);
                  for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dh = 0.0, mean_dh_h = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                      const double dh = o.grad[r * d + i] * s.data[i];
                      mean_dh += dh;
                      mean_dh_h += dh * xhat[r * d + i];
                    }
                    mean_dh *= inv_d;
                    mean_dh_h *= inv_d;
                    for (std::size_t i = 0; i < d; ++i) {
                      const double dh = o.grad[r * d + i] * s.data[i];
                      g[r * d + i] += rstd[r] * (dh - mean_dh - xhat[r * d + i] * mean_dh_h);
                    }
                  }
                });
}

Tensor binary_cross_entropy(const Tensor& p, const std::vector<double>& targets,
                            double clamp_eps) {
  require_defined(p, "binary_cross_entropy");
  require(p.numel() == targets.size(),
          "binary_cross_entropy: " + std::to_string(p.numel()) + " probabilities vs " +
              std::to_string(targets.size()) + " targets");
  const std::size_t n = targets.size();
  const auto pv = p.data();
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double y = targets[j];
    if (y < 0.0 || y > 1.0) throw DimensionError("binary_cross_entropy: target outside [0,1]");
    const double q = std::clamp(pv[j], clamp_eps, 1.0 - clamp_eps);
    total -= y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
  }
  return finish("binary_cross_entropy", {}, {total / static_cast<double>(n)}, {&p},
                [targets, clamp_eps](Node& o, std::span<Node* const> in) {
                  Node& a = *in[0];
                  if (!a.requires_grad) return;
                  auto& g = a.grad_buffer();
                  const double w = o.grad[0] / static_cast<double>(targets.size());
                  for (std::size_t j = 0; j < targets.size(); ++j) {
                    const double q = a.data[j];
                    if (q < clamp_eps || q > 1.0 - clamp_eps) continue;
                    const double y = targets[j];
                    g[j] += w * (-y / q + (1.0 - y) / (1.0 - q));
                  }
                });
}

}  // namespace tsert::ops
