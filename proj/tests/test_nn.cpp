// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tsert/error.hpp"
#include "tsert/gradcheck.hpp"
#include "tsert/nn.hpp"
#include "tsert/ops.hpp"

using namespace tsert;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void fill(Tensor& t, double v) {
  for (auto& x : t.mutable_data()) x = v;
}

// softmax(q k^T / sqrt(dh)) v per head, concatenated, times wo; plain loops.
std::vector<double> attention_oracle(const Tensor& z, const nn::LayerParams& p, std::size_t heads) {
  const std::size_t t = z.dim(0), d = z.dim(1), dh = d / heads;
  auto project = [&](const Tensor& w) {
    std::vector<double> out(t * d, 0.0);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k) out[i * d + j] += z[i * d + k] * w[k * d + j];
    return out;
  };
  const auto q = project(p.wq), k = project(p.wk), v = project(p.wv);
  std::vector<double> merged(t * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> score(t);
      double mx = -1e300;
      for (std::size_t j = 0; j < t; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q[i * d + h * dh + c] * k[j * d + h * dh + c];
        score[j] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, score[j]);
      }
      double total = 0.0;
      for (auto& s : score) total += (s = std::exp(s - mx));
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t c = 0; c < dh; ++c) merged[i * d + h * dh + c] += score[j] / total * v[j * d + h * dh + c];
    }
  }
  std::vector<double> out(t * d, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) out[i * d + j] += merged[i * d + k] * p.wo[k * d + j];
  return out;
}

class NnTest : public ::testing::Test {
 protected:
  void SetUp() override { Tape::current().reset(); }
  void TearDown() override { Tape::current().reset(); }
  nn::Rng rng{11};
};

}  // namespace

TEST_F(NnTest, PatchifyPaperSize) {
  const auto p = nn::patchify(Tensor::zeros({768}), 6);
  EXPECT_EQ(p.shape(), (Shape{6, 128}));
}

TEST_F(NnTest, PatchifySinglePatchIsInput) {
  const auto x = Tensor::from({4}, {1, 2, 3, 4});
  const auto p = nn::patchify(x, 1);
  EXPECT_EQ(p.shape(), (Shape{1, 4}));
  EXPECT_EQ(values(p), values(x));
}

TEST_F(NnTest, PatchifyEnumeration) {
  const auto p = nn::patchify(Tensor::from({6}, {1, 2, 3, 4, 5, 6}), 3);
  EXPECT_EQ(p.shape(), (Shape{3, 2}));
  EXPECT_EQ(values(p), (std::vector<double>{1, 2, 3, 4, 5, 6}));
  EXPECT_THROW(nn::patchify(Tensor::zeros({7}), 3), ConfigError);
}

TEST_F(NnTest, EmbedOfZerosIsZero) {
  auto emb = nn::make_embedding(3, 4, 5, rng);
  fill(emb.cls, 0.0);
  fill(emb.pos, 0.0);
  const auto z = nn::embed(Tensor::zeros({5, 3}), emb);
  EXPECT_EQ(z.shape(), (Shape{6, 4}));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST_F(NnTest, EmbedIdentityProjectionPrependsCls) {
  auto emb = nn::make_embedding(3, 3, 2, rng);
  auto w = emb.proj.mutable_data();
  for (std::size_t i = 0; i < 9; ++i) w[i] = i % 4 == 0 ? 1.0 : 0.0;
  fill(emb.pos, 0.0);
  auto cls = emb.cls.mutable_data();
  cls[0] = 7;
  cls[1] = 8;
  cls[2] = 9;
  const auto z = nn::embed(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}), emb);
  EXPECT_EQ(values(z), (std::vector<double>{7, 8, 9, 1, 2, 3, 4, 5, 6}));
}

TEST_F(NnTest, EmbedTemporalSiteShape) {
  const auto emb = nn::make_embedding(128, 64, 6, rng);
  EXPECT_EQ(nn::embed(Tensor::zeros({32, 6, 128}), emb).shape(), (Shape{32, 7, 64}));
  EXPECT_THROW(nn::embed(Tensor::zeros({5, 128}), emb), DimensionError);
  EXPECT_THROW(nn::embed(Tensor::zeros({6, 64}), emb), DimensionError);
}

TEST_F(NnTest, EmbedAddsPositionsRowWise) {
  const auto emb = nn::make_embedding(2, 4, 3, rng);
  const auto x = random_tensor({3, 2}, rng);
  const auto z = nn::embed(x, emb);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(z[j], emb.cls[j] + emb.pos[j]);
  for (std::size_t i = 1; i <= 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double proj = x[(i - 1) * 2] * emb.proj[j] + x[(i - 1) * 2 + 1] * emb.proj[4 + j];
      EXPECT_NEAR(z[i * 4 + j], proj + emb.pos[i * 4 + j], 1e-15);
    }
  }
}

TEST_F(NnTest, SingleTokenAttentionIsValueProjection) {
  const auto layer = nn::make_layer(4, rng);
  const auto z = random_tensor({1, 4}, rng);
  nn::AttentionTrace trace;
  const nn::Context ctx{false, 0.0, nullptr, &trace};
  const auto out = nn::msa(z, layer, 2, &ctx);
  ASSERT_EQ(trace.maps.size(), 1u);
  for (double a : trace.maps[0].data()) EXPECT_EQ(a, 1.0);
  const auto expected = ops::matmul(ops::matmul(z, layer.wv), layer.wo);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[i], expected[i], 1e-14);
}

TEST_F(NnTest, ZeroQueryKeyGivesUniformAttention) {
  auto layer = nn::make_layer(4, rng);
  fill(layer.wq, 0.0);
  fill(layer.wk, 0.0);
  nn::AttentionTrace trace;
  const nn::Context ctx{false, 0.0, nullptr, &trace};
  const auto z = random_tensor({5, 4}, rng);
  const auto out = nn::msa(z, layer, 4, &ctx);
  for (double a : trace.maps[0].data()) EXPECT_NEAR(a, 0.2, 1e-15);
  // Every output row is the mean value row, projected.
  const auto expected = ops::matmul(ops::matmul(ops::reshape(ops::mean(z, 0), {1, 4}), layer.wv), layer.wo);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out[i * 4 + j], expected[j], 1e-14);
}

TEST_F(NnTest, AttentionMatchesLoopOracle) {
  for (std::size_t heads : {1u, 2u, 4u}) {
    const auto layer = nn::make_layer(heads == 1 ? 4 : 8, rng);
    const std::size_t d = heads == 1 ? 4 : 8;
    const auto z = random_tensor({3, d}, rng, -2.0, 2.0);
    const auto out = nn::msa(z, layer, heads);
    const auto oracle = attention_oracle(z, layer, heads);
    for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(out[i], oracle[i], 1e-10) << "heads " << heads;
  }
}

TEST_F(NnTest, BatchedAttentionMatchesPerItem) {
  const auto layer = nn::make_layer(8, rng);
  const auto z = random_tensor({2, 3, 5, 8}, rng);
  const auto out = nn::msa(z, layer, 4);
  EXPECT_EQ(out.shape(), z.shape());
  for (std::size_t b = 0; b < 6; ++b) {
    const auto item = ops::slice(ops::reshape(z, {6, 5, 8}), 0, b, 1);
    const auto single = nn::msa(ops::reshape(item, {5, 8}), layer, 4);
    for (std::size_t i = 0; i < 40; ++i) EXPECT_NEAR(out[b * 40 + i], single[i], 1e-14);
  }
}

TEST_F(NnTest, AttentionRowsSumToOne) {
  const auto enc = nn::make_encoder(16, 3, 4, rng);
  nn::AttentionTrace trace;
  const nn::Context ctx{false, 0.0, nullptr, &trace};
  (void)nn::encode(random_tensor({2, 7, 16}, rng, -5.0, 5.0), enc, &ctx);
  ASSERT_EQ(trace.maps.size(), 3u);
  for (const auto& m : trace.maps) {
    EXPECT_EQ(m.shape(), (Shape{2, 4, 7, 7}));
    for (std::size_t r = 0; r < m.numel() / 7; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) s += m[r * 7 + c];
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST_F(NnTest, ZeroedBlockIsResidualPassthrough) {
  auto layer = nn::make_layer(8, rng);
  for (auto* t : {&layer.ln1_scale, &layer.ln1_shift, &layer.ln2_scale, &layer.ln2_shift, &layer.wq, &layer.wk,
                  &layer.wv, &layer.wo, &layer.w1, &layer.b1, &layer.w2, &layer.b2}) {
    fill(*t, 0.0);
  }
  const auto z = random_tensor({5, 8}, rng);
  EXPECT_EQ(values(nn::encoder_block(z, layer, 4)), values(z));
}

TEST_F(NnTest, ZeroLayerNormScalesAloneGivePassthrough) {
  auto layer = nn::make_layer(8, rng);
  fill(layer.ln1_scale, 0.0);
  fill(layer.ln2_scale, 0.0);
  const auto z = random_tensor({3, 5, 8}, rng);
  EXPECT_EQ(values(nn::encoder_block(z, layer, 4)), values(z));
}

TEST_F(NnTest, EncoderStackPreservesShape) {
  for (std::size_t depth : {1u, 2u, 3u}) {
    const auto enc = nn::make_encoder(8, depth, 2, rng);
    EXPECT_EQ(nn::encode(Tensor::zeros({4, 6, 8}), enc).shape(), (Shape{4, 6, 8}));
  }
  EXPECT_THROW(nn::make_encoder(10, 1, 4, rng), ConfigError);
}

TEST_F(NnTest, LayerNormConstantRowAndScaleZero) {
  const auto x = Tensor::full({2, 5}, 3.0);
  const auto zeros = nn::layer_norm(x, Tensor::full({5}, 1.0), Tensor::zeros({5}));
  for (double v : zeros.data()) EXPECT_EQ(v, 0.0);
  const auto shifted = nn::layer_norm(random_tensor({2, 5}, rng), Tensor::zeros({5}), Tensor::full({5}, 0.75));
  for (double v : shifted.data()) EXPECT_EQ(v, 0.75);
}

TEST_F(NnTest, MlpWithZeroWeightsIsBias) {
  auto layer = nn::make_layer(4, rng);
  fill(layer.w1, 0.0);
  fill(layer.w2, 0.0);
  auto b2 = layer.b2.mutable_data();
  for (std::size_t i = 0; i < 4; ++i) b2[i] = 0.5 * static_cast<double>(i);
  const auto out = nn::mlp(random_tensor({3, 4}, rng), layer);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out[r * 4 + i], 0.5 * static_cast<double>(i));
}

TEST_F(NnTest, MlpIdentityConstructionOnPositiveInputs) {
  // w1 = c*[I 0], w2 = [I; 0]/c: GELU(c x) = c x * Phi(c x) and Phi(c x) == 1 for c x >= 40.
  const double c = 100.0;
  auto layer = nn::make_layer(4, rng);
  fill(layer.w1, 0.0);
  fill(layer.w2, 0.0);
  auto w1 = layer.w1.mutable_data();
  auto w2 = layer.w2.mutable_data();
  for (std::size_t i = 0; i < 4; ++i) {
    w1[i * 16 + i] = c;
    w2[i * 4 + i] = 1.0 / c;
  }
  const auto x = random_tensor({3, 4}, rng, 0.5, 2.0);
  const auto out = nn::mlp(x, layer);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(out[i], x[i], 1e-12);
}

TEST_F(NnTest, PermutationEquivarianceWithoutPositions) {
  auto emb = nn::make_embedding(3, 8, 4, rng);
  const auto enc = nn::make_encoder(8, 2, 2, rng);
  const auto x = random_tensor({4, 3}, rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  const auto xp = ops::index_select(x, 0, perm);

  fill(emb.pos, 0.0);
  const auto z = nn::encode(nn::embed(x, emb), enc);
  const auto zp = nn::encode(nn::embed(xp, emb), enc);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(zp[j], z[j], 1e-13);  // cls row
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(zp[(i + 1) * 8 + j], z[(perm[i] + 1) * 8 + j], 1e-13);

  nn::Rng pos_rng(5);
  emb.pos = nn::normal_init({5, 8}, 0.5, pos_rng);
  const auto y = nn::encode(nn::embed(x, emb), enc);
  const auto yp = nn::encode(nn::embed(xp, emb), enc);
  double diff = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) diff = std::max(diff, std::abs(yp[(i + 1) * 8 + j] - y[(perm[i] + 1) * 8 + j]));
  EXPECT_GT(diff, 1e-3);
}

TEST_F(NnTest, LayerParamCountAlgebra) {
  for (std::size_t d : {4u, 8u, 16u, 64u}) {
    nn::NamedTensors named;
    nn::make_layer(d, rng).collect("l", named);
    EXPECT_EQ(named.size(), 12u);
    EXPECT_EQ(nn::param_count(named), 12 * d * d + 9 * d);
    EXPECT_EQ(nn::layer_param_count(d), 12 * d * d + 9 * d);
  }
}

TEST_F(NnTest, InitializationScheme) {
  const auto layer = nn::make_layer(32, rng);
  const double bound = std::sqrt(6.0 / (32.0 + 128.0));
  for (double v : layer.w1.data()) EXPECT_LE(std::abs(v), bound);
  for (double v : layer.b1.data()) EXPECT_EQ(v, 0.0);
  for (double v : layer.ln1_scale.data()) EXPECT_EQ(v, 1.0);
  for (double v : layer.ln1_shift.data()) EXPECT_EQ(v, 0.0);
  nn::NamedTensors named;
  layer.collect("l", named);
  for (const auto& [name, t] : named) EXPECT_TRUE(t.requires_grad()) << name;

  const auto emb = nn::make_embedding(8, 64, 200, rng);
  double sq = 0.0;
  for (double v : emb.pos.data()) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(emb.pos.numel())), nn::kTokenInitStd, 0.002);
}

TEST_F(NnTest, InitializationIsSeedDeterministic) {
  nn::Rng a(3), b(3);
  nn::NamedTensors na, nb;
  nn::make_encoder(16, 2, 4, a).collect("e", na);
  nn::make_encoder(16, 2, 4, b).collect("e", nb);
  for (std::size_t i = 0; i < na.size(); ++i) EXPECT_EQ(values(na[i].second), values(nb[i].second));
}

TEST_F(NnTest, DropoutIsIdentityOutsideTraining) {
  const auto x = random_tensor({10}, rng);
  const nn::Context eval{false, 0.5, &rng, nullptr};
  EXPECT_TRUE(nn::dropout(x, &eval).same(x));
  EXPECT_TRUE(nn::dropout(x, nullptr).same(x));
  const nn::Context train{true, 0.5, &rng, nullptr};
  const auto y = nn::dropout(Tensor::full({1000}, 1.0), &train);
  std::size_t kept = 0;
  for (double v : y.data()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    kept += v != 0.0;
  }
  EXPECT_GT(kept, 400u);
  EXPECT_LT(kept, 600u);
}

TEST_F(NnTest, BlockGradientsMatchFiniteDifferences) {
  const auto layer = nn::make_layer(8, rng);
  const auto z = random_tensor({2, 4, 8}, rng);
  auto f = [&](const std::vector<Tensor>& in) {
    nn::LayerParams p = layer;
    p.wq = in[1];
    p.w1 = in[2];
    const auto out = nn::encoder_block(in[0], p, 2);
    return ops::sum(ops::mul(out, out));
  };
  const auto r = check_gradients("encoder_block", f, {z, layer.wq, layer.w1});
  EXPECT_TRUE(r.passed) << r.max_error;
}
