// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "tsert/error.hpp"
#include "tsert/gradcheck_suite.hpp"
#include "tsert/model.hpp"
#include "tsert/ops.hpp"
#include "tsert/profiles.hpp"
#include "tsert/train.hpp"

using namespace tsert;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

std::vector<double> row(const Tensor& t, std::size_t r) {
  const std::size_t w = t.dim(-1);
  return {t.data().begin() + static_cast<std::ptrdiff_t>(r * w),
          t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * w)};
}

void fill(Tensor& t, double v) {
  for (auto& x : t.mutable_data()) x = v;
}

// Nine regions over n channels in contiguous runs.
RegionPartition nine_regions(std::size_t n) {
  std::string compact;
  for (std::size_t r = 0; r < 9; ++r) {
    if (r) compact += ';';
    compact += "r" + std::to_string(r) + ':';
    for (std::size_t c = r * n / 9, first = c; c < (r + 1) * n / 9; ++c) {
      if (c != first) compact += ',';
      compact += std::to_string(c);
    }
  }
  return RegionPartition::from_compact(compact);
}

ModelConfig small_config(Variant v = Variant::kTsert) {
  ModelConfig c;
  c.n_channels = 32;
  c.signal_len = 48;
  c.patches = 6;
  c.d_t = c.d_e = c.d_b = 8;
  c.heads = 2;
  c.variant = v;
  return c;
}

std::size_t embedding_count(std::size_t in_dim, std::size_t width, std::size_t tokens) {
  return in_dim * width + width + (tokens + 1) * width;
}

class ModelTest : public ::testing::Test {
 protected:
  void SetUp() override { Tape::current().reset(); }
  void TearDown() override { Tape::current().reset(); }
  std::mt19937_64 rng{3};
};

}  // namespace

TEST_F(ModelTest, DefaultPartitionCoversMontage) {
  const auto p = RegionPartition::default_32();
  ASSERT_EQ(p.size(), 9u);
  EXPECT_NO_THROW(p.validate(32, 9));
  std::multiset<std::size_t> seen;
  for (const auto& r : p.regions()) seen.insert(r.channels.begin(), r.channels.end());
  EXPECT_EQ(seen.size(), 32u);
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 32u);
  const auto& labels = default_channel_labels();
  std::vector<std::string> prefrontal;
  for (auto c : p.regions()[0].channels) prefrontal.push_back(labels[c]);
  std::sort(prefrontal.begin(), prefrontal.end());
  EXPECT_EQ(prefrontal, (std::vector<std::string>{"AF3", "AF4", "Fp1", "Fp2"}));
}

TEST_F(ModelTest, PartitionParsingAndValidation) {
  const std::vector<std::string> labels{"A", "B", "C", "D"};
  const auto p = RegionPartition::parse("# two regions\nleft: A, B\nright: C,D\n", labels);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.regions()[1].channels, (std::vector<std::size_t>{2, 3}));
  EXPECT_NO_THROW(p.validate(4, 0));
  EXPECT_THROW(p.validate(4, 9), ConfigError);
  EXPECT_THROW(RegionPartition::parse("left: A, Q\n", labels), ConfigError);
  EXPECT_THROW(RegionPartition::parse("left A B\n", labels), ConfigError);
  EXPECT_THROW(RegionPartition::parse("x: A, B\ny: B, C, D\n", labels).validate(4, 0), ConfigError);
  EXPECT_THROW(RegionPartition::parse("x: A, B\ny: C\n", labels).validate(4, 0), ConfigError);
  EXPECT_EQ(RegionPartition::from_compact(p.to_compact()), p);
}

TEST_F(ModelTest, ConfigTextRoundTrip) {
  auto c = model_profile(Profile::kDesk);
  c.variant = Variant::kStert;
  c.target = Target::kValence;
  c.dropout = 0.125;
  EXPECT_EQ(ModelConfig::from_text(c.to_text()), c);
  EXPECT_THROW(ModelConfig::from_text(c.to_text() + "bogus=1\n"), ConfigError);
  EXPECT_THROW(ModelConfig::from_text("variant=tsert\n"), ConfigError);
}

TEST_F(ModelTest, ConfigValidation) {
  auto c = small_config();
  c.signal_len = 50;
  EXPECT_THROW(TsertModel(c, 0), ConfigError);
  c = small_config();
  c.d_e = 9;
  EXPECT_THROW(TsertModel(c, 0), ConfigError);
  c = small_config();
  c.partition = RegionPartition::from_compact("a:0,1;b:2,3");
  EXPECT_THROW(TsertModel(c, 0), ConfigError);
}

TEST_F(ModelTest, PaperProfileDimensionChain) {
  const ModelConfig c = model_profile(Profile::kPaper);
  ASSERT_EQ(c.patch_len(), 128u);
  const TsertModel model(c, 1);
  nn::AttentionTrace trace;
  const nn::Context ctx{false, 0.0, nullptr, &trace};
  const auto x = random_tensor({32, 768}, rng);

  const auto z_t = model.temporal_extract(x, &ctx);
  EXPECT_EQ(z_t.shape(), (Shape{32, 64}));
  ASSERT_EQ(trace.maps.size(), 1u);
  EXPECT_EQ(trace.maps[0].shape(), (Shape{32, 4, 7, 7}));  // (K+1) tokens of width D_T

  trace.maps.clear();
  std::vector<Tensor> regions;
  const auto z_b = model.spatial_hierarchy(z_t, &ctx, &regions);
  EXPECT_EQ(z_b.shape(), (Shape{64}));
  ASSERT_EQ(regions.size(), 9u);
  ASSERT_EQ(trace.maps.size(), 9u * 2 + 2);
  for (std::size_t r = 0; r < 9; ++r) {
    const std::size_t m = c.partition.regions()[r].channels.size();
    EXPECT_EQ(regions[r].shape(), (Shape{1, 32}));
    EXPECT_EQ(trace.maps[2 * r].shape(), (Shape{1, 4, m + 1, m + 1}));
    EXPECT_EQ(model.electrode_level()[r].embedding.pos.shape(), (Shape{m + 1, 32}));
  }
  EXPECT_EQ(trace.maps[18].shape(), (Shape{1, 4, 10, 10}));
  EXPECT_EQ(model.brain_level()->embedding.pos.shape(), (Shape{10, 64}));

  const auto p = model.forward(x);
  EXPECT_EQ(p.rank(), 0u);
  EXPECT_GT(p.item(), 0.0);
  EXPECT_LT(p.item(), 1.0);
  EXPECT_THROW(model.forward(random_tensor({32, 700}, rng)), DimensionError);
  EXPECT_THROW(model.forward(random_tensor({31, 768}, rng)), DimensionError);
}

TEST_F(ModelTest, RegionOfFourElectrodesHasFiveTokens) {
  const TsertModel model(small_config(), 2);
  const auto& regions = model.config().partition.regions();
  const auto it = std::find_if(regions.begin(), regions.end(), [](const auto& r) { return r.channels.size() == 4; });
  ASSERT_NE(it, regions.end());
  nn::AttentionTrace trace;
  const nn::Context ctx{false, 0.0, nullptr, &trace};
  (void)model.spatial_hierarchy(random_tensor({32, 8}, rng), &ctx);
  EXPECT_EQ(trace.maps[2 * static_cast<std::size_t>(it - regions.begin())].dim(-1), 5u);
}

TEST_F(ModelTest, PaperProfileParameterCountAlgebra) {
  const ModelConfig c = model_profile(Profile::kPaper);
  const TsertModel model(c, 1);
  std::size_t expected = embedding_count(128, 64, 6) + nn::layer_param_count(64);
  for (const auto& r : c.partition.regions()) expected += embedding_count(64, 32, r.channels.size());
  expected += 9 * 2 * nn::layer_param_count(32);
  expected += embedding_count(32, 64, 9) + 2 * nn::layer_param_count(64);
  expected += 64 + 1;
  EXPECT_EQ(model.param_count(), expected);
  EXPECT_EQ(model.temporal_encoder_param_count(), nn::layer_param_count(64));
  EXPECT_EQ(model.spatial_encoder_param_count(), 18 * nn::layer_param_count(32) + 2 * nn::layer_param_count(64));
}

TEST_F(ModelTest, DoublingElectrodeDepthAddsNineBlocks) {
  auto c = small_config();
  c.l_e = 1;
  const auto base = TsertModel(c, 0).param_count();
  c.l_e = 2;
  EXPECT_EQ(TsertModel(c, 0).param_count() - base, 9 * nn::layer_param_count(c.d_e));
}

TEST_F(ModelTest, ZeroDepthCountsOnlyEmbeddingsAndHead) {
  auto c = small_config();
  c.l_t = c.l_e = c.l_b = 0;
  std::size_t expected = embedding_count(8, 8, 6) + embedding_count(8, 8, 9) + 8 + 1;
  for (const auto& r : c.partition.regions()) expected += embedding_count(8, 8, r.channels.size());
  EXPECT_EQ(TsertModel(c, 0).param_count(), expected);
}

TEST_F(ModelTest, TemporalCountIndependentOfChannelCount) {
  auto c32 = model_profile(Profile::kPaper);
  auto c64 = c32;
  c64.n_channels = 64;
  c64.partition = nine_regions(64);
  const TsertModel m32(c32, 0), m64(c64, 0);
  EXPECT_EQ(m32.temporal_stage_param_count(), m64.temporal_stage_param_count());
  EXPECT_EQ(m32.temporal_encoder_param_count(), m64.temporal_encoder_param_count());
}

TEST_F(ModelTest, IdenticalChannelsGiveIdenticalRows) {
  const TsertModel model(small_config(), 4);
  auto x = random_tensor({32, 48}, rng);
  std::vector<double> v(x.data().begin(), x.data().end());
  std::copy(v.begin() + 5 * 48, v.begin() + 6 * 48, v.begin() + 17 * 48);
  const auto z = model.temporal_extract(Tensor::from({32, 48}, v));
  EXPECT_EQ(row(z, 5), row(z, 17));
}

TEST_F(ModelTest, TemporalStageIsChannelEquivariant) {
  const TsertModel model(small_config(), 5);
  const auto x = random_tensor({2, 32, 48}, rng);
  std::vector<std::size_t> perm(32);
  for (std::size_t i = 0; i < 32; ++i) perm[i] = (i * 7 + 3) % 32;
  const auto z = model.temporal_extract(x);
  const auto zp = model.temporal_extract(ops::index_select(x, 1, perm));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(row(zp, b * 32 + i), row(z, b * 32 + perm[i]));
}

TEST_F(ModelTest, ZeroInputWithZeroTokensGivesConstantRows) {
  TsertModel model(small_config(), 6);
  fill(model.temporal()->embedding.cls, 0.0);
  fill(model.temporal()->embedding.pos, 0.0);
  const auto z = model.temporal_extract(Tensor::zeros({32, 48}));
  for (std::size_t i = 1; i < 32; ++i) EXPECT_EQ(row(z, i), row(z, 0));
}

TEST_F(ModelTest, ElectrodeOrderWithinRegionIsIrrelevantWithoutPositions) {
  TsertModel model(small_config(), 7);
  for (auto& s : model.electrode_level()) fill(s.embedding.pos, 0.0);
  const auto f = random_tensor({32, 8}, rng);
  std::vector<Tensor> before, after;
  (void)model.spatial_hierarchy(f, nullptr, &before);
  // Reverse the electrodes of every region in the feature matrix.
  std::vector<std::size_t> perm(32);
  for (std::size_t c = 0; c < 32; ++c) perm[c] = c;
  for (const auto& r : model.config().partition.regions()) {
    for (std::size_t i = 0; i < r.channels.size(); ++i) perm[r.channels[i]] = r.channels[r.channels.size() - 1 - i];
  }
  (void)model.spatial_hierarchy(ops::index_select(f, 0, perm), nullptr, &after);
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(after[r][j], before[r][j], 1e-12);
}

TEST_F(ModelTest, ElectrodeEncodersAreIsolated) {
  const TsertModel model(small_config(), 8);
  const auto f = random_tensor({32, 8}, rng);
  std::vector<double> v(f.data().begin(), f.data().end());
  const std::size_t channel = model.config().partition.regions()[4].channels[0];
  v[channel * 8 + 3] += 0.5;
  std::vector<Tensor> before, after;
  (void)model.spatial_hierarchy(f, nullptr, &before);
  (void)model.spatial_hierarchy(Tensor::from({32, 8}, v), nullptr, &after);
  for (std::size_t r = 0; r < 9; ++r) {
    if (r == 4) {
      EXPECT_NE(row(after[r], 0), row(before[r], 0));
    } else {
      EXPECT_EQ(row(after[r], 0), row(before[r], 0)) << "region " << r;
    }
  }
  nn::NamedTensors a, b;
  model.electrode_level()[0].encoder.collect("a", a);
  model.electrode_level()[1].encoder.collect("b", b);
  EXPECT_FALSE(a[2].second.same(b[2].second));
}

TEST_F(ModelTest, ClassifierHead) {
  TsertModel model(small_config(), 9);
  auto named = model.parameters();
  for (auto& [name, t] : named) {
    if (name == "head.w" || name == "head.b") fill(t, 0.0);
  }
  EXPECT_EQ(model.classify(random_tensor({8}, rng)).item(), 0.5);
  for (auto& [name, t] : named) {
    if (name == "head.w") fill(t, 1.0);
  }
  double last = 0.0;
  for (double s : {-2.0, -0.5, 0.0, 0.1, 3.0}) {
    const double p = model.classify(Tensor::full({8}, s)).item();
    EXPECT_GT(p, last);
    last = p;
  }
}

TEST_F(ModelTest, ForwardBatchMatchesSingles) {
  const TsertModel model(small_config(), 10);
  const auto x = random_tensor({3, 32, 48}, rng, -5, 5);
  const auto p = model.forward(x);
  ASSERT_EQ(p.shape(), (Shape{3}));
  for (std::size_t b = 0; b < 3; ++b) {
    const auto single = model.forward(ops::reshape(ops::slice(x, 0, b, 1), {32, 48}));
    EXPECT_NEAR(single.item(), p[b], 1e-14);
    EXPECT_GT(p[b], 0.0);
    EXPECT_LT(p[b], 1.0);
  }
}

TEST_F(ModelTest, VariantStructure) {
  const auto cfg = small_config();
  const TsertModel tsert(cfg, 0);
  auto sc = cfg;
  sc.variant = Variant::kSert;
  const TsertModel sert(sc, 0);
  EXPECT_FALSE(sert.temporal().has_value());
  EXPECT_EQ(sert.temporal_encoder_param_count(), 0u);
  EXPECT_EQ(sert.param_count(),
            tsert.param_count() - tsert.temporal_stage_param_count() + cfg.signal_len * cfg.d_t + cfg.d_t);

  auto tc = cfg;
  tc.variant = Variant::kTert;
  const TsertModel tert(tc, 0);
  EXPECT_TRUE(tert.electrode_level().empty());
  EXPECT_FALSE(tert.brain_level().has_value());
  EXPECT_EQ(tert.spatial_encoder_param_count(), 0u);
  EXPECT_EQ(tert.param_count(), tert.temporal_stage_param_count() + cfg.n_channels * cfg.d_t + 1);

  auto st = cfg;
  st.variant = Variant::kStert;
  const TsertModel stert(st, 0);
  EXPECT_EQ(stert.temporal()->embedding.in_dim(), cfg.d_b);
  EXPECT_EQ(stert.electrode_level().front().embedding.in_dim(), cfg.patch_len());
  EXPECT_THROW(stert.temporal_extract(random_tensor({32, 48}, rng)), ConfigError);

  auto pc = cfg;
  pc.variant = Variant::kTsertPsd;
  const TsertModel psd(pc, 0);
  EXPECT_EQ(pc.input_len(), 6u * 4u);
  EXPECT_EQ(psd.temporal()->embedding.in_dim(), 4u);
}

TEST_F(ModelTest, EveryVariantProducesProbabilities) {
  for (auto v : {Variant::kTsert, Variant::kSert, Variant::kTert, Variant::kStert, Variant::kTsertPsd}) {
    const auto cfg = reduced_config(v);
    const TsertModel model = build_variant(cfg, 1);
    const auto p = model.forward(random_tensor({5, cfg.n_channels, cfg.input_len()}, rng, -3, 3));
    for (double x : p.data()) {
      EXPECT_GT(x, 0.0) << to_string(v);
      EXPECT_LT(x, 1.0) << to_string(v);
    }
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_variant("vit"), ConfigError);
}

TEST_F(ModelTest, SameSeedSameWeights) {
  const TsertModel a(small_config(), 77), b(small_config(), 77), c(small_config(), 78);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(row(ops::reshape(pa[i].second, {pa[i].second.numel()}), 0),
              row(ops::reshape(pb[i].second, {pb[i].second.numel()}), 0));
    any_diff |= row(ops::reshape(pa[i].second, {pa[i].second.numel()}), 0) !=
                row(ops::reshape(pc[i].second, {pc[i].second.numel()}), 0);
  }
  EXPECT_TRUE(any_diff);
}

TEST_F(ModelTest, ReducedModelGradientsMatchFiniteDifferences) {
  for (auto v : {Variant::kTsert, Variant::kSert, Variant::kTert, Variant::kStert, Variant::kTsertPsd}) {
    const auto cfg = reduced_config(v);
    const TsertModel model(cfg, 12);
    const auto x = random_tensor({2, cfg.n_channels, cfg.input_len()}, rng, -2, 2);
    for (const auto& check : check_model_gradients(model, x, {1, 0}, 1e-5, 1e-4, 16)) {
      EXPECT_TRUE(check.passed) << check.name << " " << check.max_error;
    }
  }
}

TEST_F(ModelTest, HeadGradientOfBceMatchesFiniteDifferences) {
  const TsertModel model(small_config(), 13);
  const auto x = random_tensor({4, 32, 48}, rng);
  const std::vector<int> y{1, 0, 0, 1};
  auto named = model.parameters();
  Tensor head_w;
  for (auto& [name, t] : named) {
    if (name == "head.w") head_w = t;
  }
  backward(bce_loss(model.forward(x), y));
  const std::vector<double> analytic(head_w.grad().begin(), head_w.grad().end());
  Tape::current().reset();
  NoGradGuard guard;
  auto w = head_w.mutable_data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = w[i];
    w[i] = orig + 1e-5;
    const double up = bce_loss(model.forward(x), y).item();
    w[i] = orig - 1e-5;
    const double down = bce_loss(model.forward(x), y).item();
    w[i] = orig;
    const double numeric = (up - down) / 2e-5;
    EXPECT_LT(std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)), 1e-4);
  }
}
