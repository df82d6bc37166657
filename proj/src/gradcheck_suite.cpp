// SPDX-License-Identifier: Apache-2.0
#include "tsert/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tsert/nn.hpp"
#include "tsert/ops.hpp"
#include "tsert/profiles.hpp"
#include "tsert/train.hpp"

namespace tsert {

namespace {

Tensor random_tensor(Shape shape, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

// Weighted sum with fixed random weights, so every output element matters.
struct Projector {
  std::vector<double> weights;
  Tensor operator()(const Tensor& t) {
    if (weights.size() != t.numel()) {
      weights.resize(t.numel());
      for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = std::sin(1.7 * static_cast<double>(i) + 0.3);
    }
    return ops::sum(ops::mul(t, Tensor::from(t.shape(), weights)));
  }
};

}  // namespace

std::vector<GradCheck> check_model_gradients(const TsertModel& model, const Tensor& x,
                                             const std::vector<int>& labels, double eps,
                                             double tolerance, std::size_t max_per_tensor) {
  auto named = model.parameters();
  auto loss_of = [&](const Tensor& input) { return bce_loss(model.forward(input), labels); };

  auto& tape = Tape::current();
  tape.reset();
  for (auto& [name, t] : named) t.zero_grad();
  backward(loss_of(x));
  tape.reset();

  std::vector<GradCheck> out;
  for (auto& [name, t] : named) {
    NoGradGuard guard;
    GradCheck gc{model.config().variant == Variant::kTsert ? "model." + name
                                                           : to_string(model.config().variant) + "." + name};
    const std::vector<double> grad(t.grad().begin(), t.grad().end());
    auto values = t.mutable_data();
    const std::size_t n = values.size();
    const std::size_t stride =
        max_per_tensor == 0 || n <= max_per_tensor ? 1 : (n + max_per_tensor - 1) / max_per_tensor;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = values[i];
      values[i] = orig + eps;
      const double up = loss_of(x).item();
      values[i] = orig - eps;
      const double down = loss_of(x).item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grad.empty() ? 0.0 : grad[i];
      gc.max_error = std::max(gc.max_error, std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)));
      ++gc.checked;
    }
    gc.passed = gc.max_error < tolerance;
    t.zero_grad();
    out.push_back(gc);
  }
  {
    auto input_check = check_gradients(
        to_string(model.config().variant) + ".input",
        [&](const std::vector<Tensor>& in) { return loss_of(in[0]); }, {x}, eps, tolerance,
        max_per_tensor);
    out.push_back(input_check);
  }
  for (auto& [name, t] : named) t.zero_grad();
  return out;
}

std::vector<GradCheck> run_gradcheck_suite(std::uint64_t seed) {
  nn::Rng rng(seed);
  std::vector<GradCheck> out;
  auto check = [&](const std::string& name, MultiScalarFn f, std::vector<Tensor> inputs) {
    out.push_back(check_gradients(name, f, inputs));
  };

  Projector proj;
  check("matmul", [&](const auto& in) { return proj(ops::matmul(in[0], in[1])); },
        {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)});
  check("matmul.batched", [&](const auto& in) { return proj(ops::matmul(in[0], in[1])); },
        {random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 2}, rng)});
  check("matmul.shared", [&](const auto& in) { return proj(ops::matmul(in[0], in[1])); },
        {random_tensor({2, 3, 4}, rng), random_tensor({4, 2}, rng)});
  check("add.broadcast", [&](const auto& in) { return proj(ops::add(in[0], in[1])); },
        {random_tensor({2, 3, 4}, rng), random_tensor({3, 4}, rng)});
  check("sub", [&](const auto& in) { return proj(ops::sub(in[0], in[1])); },
        {random_tensor({3, 4}, rng), random_tensor({4}, rng)});
  check("mul", [&](const auto& in) { return proj(ops::mul(in[0], in[1])); },
        {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
  check("scale", [&](const auto& in) { return proj(ops::scale(in[0], -2.5)); },
        {random_tensor({5}, rng)});
  check("gelu", [&](const auto& in) { return proj(ops::gelu(in[0])); },
        {random_tensor({4, 5}, rng, -4.0, 4.0)});
  check("sigmoid", [&](const auto& in) { return proj(ops::sigmoid(in[0])); },
        {random_tensor({4, 5}, rng, -6.0, 6.0)});
  check("softmax.last", [&](const auto& in) { return proj(ops::softmax(in[0], -1)); },
        {random_tensor({3, 5}, rng, -3.0, 3.0)});
  check("softmax.first", [&](const auto& in) { return proj(ops::softmax(in[0], 0)); },
        {random_tensor({3, 2, 4}, rng, -3.0, 3.0)});
  check("mean", [&](const auto& in) { return proj(ops::mean(in[0], 1)); },
        {random_tensor({2, 3, 4}, rng)});
  check("sum", [&](const auto& in) { return ops::sum(in[0]); }, {random_tensor({3, 3}, rng)});
  check("concat", [&](const auto& in) { return proj(ops::concat({in[0], in[1]}, 1)); },
        {random_tensor({2, 1, 3}, rng), random_tensor({2, 4, 3}, rng)});
  check("transpose", [&](const auto& in) { return proj(ops::transpose(in[0])); },
        {random_tensor({2, 3, 4}, rng)});
  check("permute", [&](const auto& in) { return proj(ops::permute(in[0], {2, 0, 1})); },
        {random_tensor({2, 3, 4}, rng)});
  check("reshape", [&](const auto& in) { return proj(ops::reshape(in[0], {6, 2})); },
        {random_tensor({3, 4}, rng)});
  check("slice", [&](const auto& in) { return proj(ops::slice(in[0], 1, 1, 2)); },
        {random_tensor({2, 4, 3}, rng)});
  check("index_select", [&](const auto& in) { return proj(ops::index_select(in[0], 1, {3, 0, 3})); },
        {random_tensor({2, 4, 3}, rng)});
  check("broadcast_to", [&](const auto& in) { return proj(ops::broadcast_to(in[0], {3, 2, 4})); },
        {random_tensor({4}, rng)});
  check("layer_norm",
        [&](const auto& in) { return proj(ops::layer_norm(in[0], in[1], in[2], nn::kLayerNormEps)); },
        {random_tensor({3, 6}, rng, -2.0, 2.0), random_tensor({6}, rng, 0.5, 1.5), random_tensor({6}, rng)});
  check("binary_cross_entropy",
        [&](const auto& in) { return ops::binary_cross_entropy(in[0], {1, 0, 0, 1, 1}); },
        {random_tensor({5}, rng, 0.1, 0.9)});

  // Encoder building blocks at width 8 with 2 heads.
  const std::size_t width = 8, tokens = 5;
  auto layer = nn::make_layer(width, rng);
  auto layer_inputs = [&] {
    return std::vector<Tensor>{layer.ln1_scale, layer.ln1_shift, layer.wq, layer.wk, layer.wv, layer.wo,
                               layer.ln2_scale, layer.ln2_shift, layer.w1, layer.b1, layer.w2, layer.b2};
  };
  auto rebuild = [](const std::vector<Tensor>& in) {
    return nn::LayerParams{in[1], in[2], in[3], in[4], in[5], in[6],
                           in[7], in[8], in[9], in[10], in[11], in[12]};
  };
  {
    auto inputs = layer_inputs();
    inputs.insert(inputs.begin(), random_tensor({2, tokens, width}, rng));
    check("msa", [&](const auto& in) { return proj(nn::msa(in[0], rebuild(in), 2)); }, inputs);
    check("mlp", [&](const auto& in) { return proj(nn::mlp(in[0], rebuild(in))); }, inputs);
    check("encoder_block", [&](const auto& in) { return proj(nn::encoder_block(in[0], rebuild(in), 2)); },
          inputs);
  }
  {
    auto emb = nn::make_embedding(6, width, 3, rng);
    check("embed",
          [&](const auto& in) { return proj(nn::embed(in[0], nn::EmbeddingParams{in[1], in[2], in[3]})); },
          {random_tensor({2, 3, 6}, rng), emb.proj, emb.cls, emb.pos});
  }

  for (auto variant : {Variant::kTsert, Variant::kSert, Variant::kTert, Variant::kStert,
                       Variant::kTsertPsd}) {
    const auto cfg = reduced_config(variant);
    const TsertModel model(cfg, seed + 1);
    const Tensor x = random_tensor({3, cfg.n_channels, cfg.input_len()}, rng, -2.0, 2.0);
    const auto checks = check_model_gradients(model, x, {1, 0, 1}, 1e-5, 1e-4,
                                              variant == Variant::kTsert ? 0 : 24);
    out.insert(out.end(), checks.begin(), checks.end());
  }
  return out;
}

}  // namespace tsert
