// SPDX-License-Identifier: Apache-2.0
#include "tsert/nn.hpp"

#include <cmath>

#include "tsert/ops.hpp"

namespace tsert::nn {

void LayerParams::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".ln1.scale", ln1_scale);
  out.emplace_back(prefix + ".ln1.shift", ln1_shift);
  out.emplace_back(prefix + ".attn.wq", wq);
  out.emplace_back(prefix + ".attn.wk", wk);
  out.emplace_back(prefix + ".attn.wv", wv);
  out.emplace_back(prefix + ".attn.wo", wo);
  out.emplace_back(prefix + ".ln2.scale", ln2_scale);
  out.emplace_back(prefix + ".ln2.shift", ln2_shift);
  out.emplace_back(prefix + ".mlp.w1", w1);
  out.emplace_back(prefix + ".mlp.b1", b1);
  out.emplace_back(prefix + ".mlp.w2", w2);
  out.emplace_back(prefix + ".mlp.b2", b2);
}

void EncoderParams::collect(const std::string& prefix, NamedTensors& out) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].collect(prefix + ".layer" + std::to_string(l), out);
  }
}

void EmbeddingParams::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".proj", proj);
  out.emplace_back(prefix + ".cls", cls);
  out.emplace_back(prefix + ".pos", pos);
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> values(fan_in * fan_out);
  for (auto& v : values) v = dist(rng);
  return Tensor::from({fan_in, fan_out}, std::move(values), true);
}

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

LayerParams make_layer(std::size_t width, Rng& rng) {
  const std::size_t hidden = kMlpRatio * width;
  LayerParams p;
  p.ln1_scale = Tensor::full({width}, 1.0, true);
  p.ln1_shift = Tensor::zeros({width}, true);
  p.wq = glorot_uniform(width, width, rng);
  p.wk = glorot_uniform(width, width, rng);
  p.wv = glorot_uniform(width, width, rng);
  p.wo = glorot_uniform(width, width, rng);
  p.ln2_scale = Tensor::full({width}, 1.0, true);
  p.ln2_shift = Tensor::zeros({width}, true);
  p.w1 = glorot_uniform(width, hidden, rng);
  p.b1 = Tensor::zeros({hidden}, true);
  p.w2 = glorot_uniform(hidden, width, rng);
  p.b2 = Tensor::zeros({width}, true);
  return p;
}

EncoderParams make_encoder(std::size_t width, std::size_t depth, std::size_t heads, Rng& rng) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("encoder width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  EncoderParams enc;
  enc.width = width;
  enc.heads = heads;
  for (std::size_t l = 0; l < depth; ++l) enc.layers.push_back(make_layer(width, rng));
  return enc;
}

EmbeddingParams make_embedding(std::size_t in_dim, std::size_t width, std::size_t patches,
                               Rng& rng) {
  EmbeddingParams e;
  e.proj = glorot_uniform(in_dim, width, rng);
  e.cls = normal_init({width}, kTokenInitStd, rng);
  e.pos = normal_init({patches + 1, width}, kTokenInitStd, rng);
  return e;
}

std::size_t layer_param_count(std::size_t width) { return 12 * width * width + 9 * width; }

std::size_t param_count(const NamedTensors& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

Tensor patchify(const Tensor& signal, std::size_t k) {
  const std::size_t d = signal.dim(-1);
  if (k == 0 || d % k != 0) {
    throw ConfigError("signal length " + std::to_string(d) + " is not divisible into " +
                      std::to_string(k) + " patches");
  }
  Shape shape(signal.shape().begin(), signal.shape().end() - 1);
  shape.push_back(k);
  shape.push_back(d / k);
  return ops::reshape(signal, std::move(shape));
}

Tensor embed(const Tensor& patches, const EmbeddingParams& emb) {
  if (patches.rank() < 2) {
    throw DimensionError("embed: patches must be [..., P, in_dim], got " +
                         to_string(patches.shape()));
  }
  const std::size_t p = patches.dim(-2);
  if (patches.dim(-1) != emb.in_dim()) {
    throw DimensionError("embed: patch width " + std::to_string(patches.dim(-1)) +
                         " does not match projection " + to_string(emb.proj.shape()));
  }
  if (emb.pos.dim(0) != p + 1) {
    throw DimensionError("embed: positional table " + to_string(emb.pos.shape()) + " needs " +
                         std::to_string(p + 1) + " rows");
  }
  const Tensor projected = ops::matmul(patches, emb.proj);
  Shape cls_shape(patches.shape().begin(), patches.shape().end() - 2);
  cls_shape.push_back(1);
  cls_shape.push_back(emb.width());
  const Tensor cls = ops::broadcast_to(emb.cls, cls_shape);
  return ops::add(ops::concat({cls, projected}, -2), emb.pos);
}

Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, double eps) {
  return ops::layer_norm(x, scale, shift, eps);
}

Tensor msa(const Tensor& z, const LayerParams& layer, std::size_t heads, const Context* ctx) {
  const std::size_t t = z.dim(-2), d = z.dim(-1);
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("msa: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const std::size_t lead = z.numel() / (t * d);

  const Tensor z3 = ops::reshape(z, {lead, t, d});
  auto split_heads = [&](const Tensor& w) {
    return ops::permute(ops::reshape(ops::matmul(z3, w), {lead, t, heads, dh}), {0, 2, 1, 3});
  };
  const Tensor q = split_heads(layer.wq);
  const Tensor k = split_heads(layer.wk);
  const Tensor v = split_heads(layer.wv);

  const Tensor scores = ops::scale(ops::matmul(q, ops::transpose(k)),
                                   1.0 / std::sqrt(static_cast<double>(dh)));
  const Tensor attn = ops::softmax(scores, -1);
  if (ctx && ctx->trace) ctx->trace->maps.push_back(attn);

  const Tensor heads_out = ops::matmul(attn, v);  // [lead, h, T, dh]
  const Tensor merged = ops::reshape(ops::permute(heads_out, {0, 2, 1, 3}), {lead, t, d});
  return ops::reshape(ops::matmul(merged, layer.wo), z.shape());
}

Tensor mlp(const Tensor& z, const LayerParams& layer) {
  const Tensor hidden = ops::gelu(ops::add(ops::matmul(z, layer.w1), layer.b1));
  return ops::add(ops::matmul(hidden, layer.w2), layer.b2);
}

Tensor dropout(const Tensor& x, const Context* ctx) {
  if (!ctx || !ctx->training || ctx->dropout <= 0.0) return x;
  if (!ctx->rng) throw ConfigError("dropout requires an rng in the forward context");
  const double keep = 1.0 - ctx->dropout;
  std::bernoulli_distribution bern(keep);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = bern(*ctx->rng) ? 1.0 / keep : 0.0;
  return ops::mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor encoder_block(const Tensor& z, const LayerParams& layer, std::size_t heads,
                     const Context* ctx) {
  const Tensor attn = msa(layer_norm(z, layer.ln1_scale, layer.ln1_shift), layer, heads, ctx);
  const Tensor mid = ops::add(dropout(attn, ctx), z);
  const Tensor ff = mlp(layer_norm(mid, layer.ln2_scale, layer.ln2_shift), layer);
  return ops::add(dropout(ff, ctx), mid);
}

Tensor encode(const Tensor& z, const EncoderParams& encoder, const Context* ctx) {
  Tensor out = z;
  for (const auto& layer : encoder.layers) out = encoder_block(out, layer, encoder.heads, ctx);
  return out;
}

}  // namespace tsert::nn
