// SPDX-License-Identifier: Apache-2.0
//
// Transformer encoder building blocks: patch embedding with a class token and
// learned positional table, multi-head self-attention, the GELU MLP, layer
// normalization, and the pre-norm residual block
//
//   z' = MSA(LN(z)) + z
//   z  = MLP(LN(z')) + z'
//
// All blocks accept any number of leading batch dimensions in front of the
// [tokens x width] trailing pair.
#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tsert/tensor.hpp"

namespace tsert::nn {

using Rng = std::mt19937_64;
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr std::size_t kMlpRatio = 4;
inline constexpr double kTokenInitStd = 0.02;

struct LayerParams {
  Tensor ln1_scale, ln1_shift;
  Tensor wq, wk, wv, wo;  // [D x D], no bias
  Tensor ln2_scale, ln2_shift;
  Tensor w1, b1;  // [D x 4D], [4D]
  Tensor w2, b2;  // [4D x D], [D]

  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct EncoderParams {
  std::size_t width = 0;
  std::size_t heads = 1;
  std::vector<LayerParams> layers;

  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct EmbeddingParams {
  Tensor proj;  // [in_dim x D]
  Tensor cls;   // [D]
  Tensor pos;   // [(P+1) x D]

  std::size_t in_dim() const { return proj.dim(0); }
  std::size_t width() const { return proj.dim(1); }
  std::size_t patches() const { return pos.dim(0) - 1; }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// Attention probabilities captured during a forward pass, one tensor of
/// shape [batch, heads, T, T] per MSA call, in call order.
struct AttentionTrace {
  std::vector<Tensor> maps;
};

/// Per-forward options. A null context means inference with no tracing.
struct Context {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
  AttentionTrace* trace = nullptr;
};

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor normal_init(Shape shape, double stddev, Rng& rng);

LayerParams make_layer(std::size_t width, Rng& rng);
EncoderParams make_encoder(std::size_t width, std::size_t depth, std::size_t heads, Rng& rng);
EmbeddingParams make_embedding(std::size_t in_dim, std::size_t width, std::size_t patches,
                               Rng& rng);

// Trainable scalars in one encoder layer of width D: 12 D^2 + 9 D.
std::size_t layer_param_count(std::size_t width);
std::size_t param_count(const NamedTensors& params);

// [..., d] -> [..., k, d/k]; patch i is the slice [i*d/k, (i+1)*d/k).
Tensor patchify(const Tensor& signal, std::size_t k);

// [..., P, in_dim] -> [..., P+1, D]. Row 0 is cls + pos[0], row i is
// patches[i-1] * proj + pos[i].
Tensor embed(const Tensor& patches, const EmbeddingParams& emb);

Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift,
                  double eps = kLayerNormEps);

Tensor msa(const Tensor& z, const LayerParams& layer, std::size_t heads,
           const Context* ctx = nullptr);
Tensor mlp(const Tensor& z, const LayerParams& layer);
Tensor encoder_block(const Tensor& z, const LayerParams& layer, std::size_t heads,
                     const Context* ctx = nullptr);
// Runs every layer of the encoder in order.
Tensor encode(const Tensor& z, const EncoderParams& encoder, const Context* ctx = nullptr);

// Inverted dropout; identity unless ctx is training with a positive rate.
Tensor dropout(const Tensor& x, const Context* ctx);

}  // namespace tsert::nn
