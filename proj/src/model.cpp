// SPDX-License-Identifier: Apache-2.0
#include "tsert/model.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "tsert/ops.hpp"

namespace tsert {

namespace {

void expect_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw DimensionError(std::string(what) + ": expected " + to_string(expected) + ", got " +
                         to_string(t.shape()));
  }
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key `" + key + "`: not a non-negative integer: " + value);
  }
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kTsert: return "tsert";
    case Variant::kSert: return "sert";
    case Variant::kTert: return "tert";
    case Variant::kStert: return "stert";
    case Variant::kTsertPsd: return "tsert-psd";
  }
  return "?";
}

std::string to_string(Target t) { return t == Target::kArousal ? "arousal" : "valence"; }

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::kTsert, Variant::kSert, Variant::kTert, Variant::kStert,
                 Variant::kTsertPsd}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant `" + std::string(name) + "`");
}

Target parse_target(std::string_view name) {
  if (name == "arousal") return Target::kArousal;
  if (name == "valence") return Target::kValence;
  throw ConfigError("unknown target `" + std::string(name) + "`");
}

std::size_t ModelConfig::patch_len() const {
  if (variant == Variant::kTsertPsd) return psd_bands;
  return patches == 0 ? 0 : signal_len / patches;
}

std::size_t ModelConfig::input_len() const {
  return variant == Variant::kTsertPsd ? patches * psd_bands : signal_len;
}

void ModelConfig::validate() const {
  if (n_channels == 0) throw ConfigError("n_channels must be positive");
  if (patches == 0 || signal_len % patches != 0) {
    throw ConfigError("signal_len " + std::to_string(signal_len) + " is not divisible by K=" +
                      std::to_string(patches));
  }
  if (variant == Variant::kTsertPsd && psd_bands == 0) throw ConfigError("psd_bands must be positive");
  for (auto [name, width] : {std::pair{"d_t", d_t}, {"d_e", d_e}, {"d_b", d_b}}) {
    if (width == 0 || heads == 0 || width % heads != 0) {
      throw ConfigError(std::string(name) + "=" + std::to_string(width) +
                        " is not divisible by heads=" + std::to_string(heads));
    }
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  partition.validate(n_channels, strict_regions ? kBrainRegions : 0);
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "variant=" << to_string(variant) << '\n'
     << "target=" << to_string(target) << '\n'
     << "n_channels=" << n_channels << '\n'
     << "signal_len=" << signal_len << '\n'
     << "patches=" << patches << '\n'
     << "d_t=" << d_t << '\n'
     << "d_e=" << d_e << '\n'
     << "d_b=" << d_b << '\n'
     << "l_t=" << l_t << '\n'
     << "l_e=" << l_e << '\n'
     << "l_b=" << l_b << '\n'
     << "heads=" << heads << '\n'
     << "psd_bands=" << psd_bands << '\n'
     << "dropout=" << dropout << '\n'
     << "strict_regions=" << (strict_regions ? 1 : 0) << '\n'
     << "partition=" << partition.to_compact() << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line without `=`: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ModelConfig c;
  auto take = [&](const char* key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(std::string("config missing key `") + key + "`");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  c.variant = parse_variant(take("variant"));
  c.target = parse_target(take("target"));
  c.n_channels = parse_size("n_channels", take("n_channels"));
  c.signal_len = parse_size("signal_len", take("signal_len"));
  c.patches = parse_size("patches", take("patches"));
  c.d_t = parse_size("d_t", take("d_t"));
  c.d_e = parse_size("d_e", take("d_e"));
  c.d_b = parse_size("d_b", take("d_b"));
  c.l_t = parse_size("l_t", take("l_t"));
  c.l_e = parse_size("l_e", take("l_e"));
  c.l_b = parse_size("l_b", take("l_b"));
  c.heads = parse_size("heads", take("heads"));
  c.psd_bands = parse_size("psd_bands", take("psd_bands"));
  const std::string dropout_text = take("dropout");
  try {
    c.dropout = std::stod(dropout_text);
  } catch (const std::exception&) {
    throw ConfigError("config key `dropout`: not a number: " + dropout_text);
  }
  c.strict_regions = parse_size("strict_regions", take("strict_regions")) != 0;
  c.partition = RegionPartition::from_compact(take("partition"));
  if (!kv.empty()) throw ConfigError("unknown config key `" + kv.begin()->first + "`");
  return c;
}

TsertModel::TsertModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  nn::Rng rng(seed);
  auto make_stage = [&](std::size_t in_dim, std::size_t width, std::size_t tokens,
                        std::size_t depth) {
    Stage s;
    s.embedding = nn::make_embedding(in_dim, width, tokens, rng);
    s.encoder = nn::make_encoder(width, depth, c.heads, rng);
    return s;
  };
  auto make_hierarchy = [&](std::size_t feature_dim) {
    for (const auto& region : c.partition.regions()) {
      electrode_.push_back(make_stage(feature_dim, c.d_e, region.channels.size(), c.l_e));
    }
    brain_ = make_stage(c.d_e, c.d_b, c.partition.size(), c.l_b);
  };

  std::size_t head_in = c.d_b;
  switch (c.variant) {
    case Variant::kTsert:
    case Variant::kTsertPsd:
      temporal_ = make_stage(c.patch_len(), c.d_t, c.patches, c.l_t);
      make_hierarchy(c.d_t);
      break;
    case Variant::kSert:
      channel_proj_w_ = nn::glorot_uniform(c.signal_len, c.d_t, rng);
      channel_proj_b_ = Tensor::zeros({c.d_t}, true);
      make_hierarchy(c.d_t);
      break;
    case Variant::kTert:
      temporal_ = make_stage(c.patch_len(), c.d_t, c.patches, c.l_t);
      head_in = c.n_channels * c.d_t;
      break;
    case Variant::kStert:
      make_hierarchy(c.patch_len());
      temporal_ = make_stage(c.d_b, c.d_t, c.patches, c.l_t);
      head_in = c.d_t;
      break;
  }
  head_w_ = nn::glorot_uniform(head_in, 1, rng);
  head_b_ = Tensor::zeros({1}, true);
}

Tensor TsertModel::batched(const Tensor& x) const {
  const auto& c = config_;
  const Shape single{c.n_channels, c.input_len()};
  if (x.shape() == single) return ops::reshape(x, {1, c.n_channels, c.input_len()});
  if (x.rank() == 3 && x.dim(1) == c.n_channels && x.dim(2) == c.input_len()) return x;
  throw DimensionError("model input must be " + to_string(single) + " or [B x " +
                       std::to_string(c.n_channels) + " x " + std::to_string(c.input_len()) +
                       "], got " + to_string(x.shape()));
}

Tensor TsertModel::temporal_extract(const Tensor& x, const nn::Context* ctx) const {
  if (!temporal_ || config_.variant == Variant::kStert) {
    throw ConfigError("variant " + to_string(config_.variant) + " has no per-channel temporal stage");
  }
  const auto& c = config_;
  const bool single = x.rank() == 2;
  const Tensor xb = batched(x);
  const std::size_t b = xb.dim(0), rows = b * c.n_channels;
  const Tensor patches = nn::patchify(ops::reshape(xb, {rows, c.input_len()}), c.patches);
  const Tensor z0 = nn::embed(patches, temporal_->embedding);
  expect_shape(z0, {rows, c.patches + 1, c.d_t}, "temporal tokens");
  const Tensor z = nn::encode(z0, temporal_->encoder, ctx);
  const Tensor pooled = ops::mean(z, 1);
  return single ? ops::reshape(pooled, {c.n_channels, c.d_t})
                : ops::reshape(pooled, {b, c.n_channels, c.d_t});
}

Tensor TsertModel::spatial_hierarchy(const Tensor& features, const nn::Context* ctx,
                                     std::vector<Tensor>* region_out) const {
  if (!brain_) {
    throw ConfigError("variant " + to_string(config_.variant) + " has no spatial hierarchy");
  }
  const auto& c = config_;
  const bool single = features.rank() == 2;
  const Tensor fb = single ? ops::reshape(features, {1, features.dim(0), features.dim(1)}) : features;
  const std::size_t feature_dim = electrode_.front().embedding.in_dim();
  if (fb.rank() != 3 || fb.dim(1) != c.n_channels || fb.dim(2) != feature_dim) {
    throw DimensionError("spatial input must be [B x " + std::to_string(c.n_channels) + " x " +
                         std::to_string(feature_dim) + "], got " + to_string(features.shape()));
  }
  const std::size_t b = fb.dim(0);
  const auto& regions = c.partition.regions();
  std::vector<Tensor> tokens;
  tokens.reserve(regions.size());
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const Tensor members = ops::index_select(fb, 1, regions[r].channels);
    const Tensor z0 = nn::embed(members, electrode_[r].embedding);
    expect_shape(z0, {b, regions[r].channels.size() + 1, c.d_e}, "electrode-level tokens");
    const Tensor z = nn::encode(z0, electrode_[r].encoder, ctx);
    const Tensor cls = ops::slice(z, 1, 0, 1);  // [B x 1 x D_E]
    if (region_out) region_out->push_back(ops::reshape(cls, {b, c.d_e}));
    tokens.push_back(cls);
  }
  const Tensor z0 = nn::embed(ops::concat(tokens, 1), brain_->embedding);
  expect_shape(z0, {b, regions.size() + 1, c.d_b}, "brain-level tokens");
  const Tensor z = nn::encode(z0, brain_->encoder, ctx);
  const Tensor cls = ops::reshape(ops::slice(z, 1, 0, 1), {b, c.d_b});
  return single ? ops::reshape(cls, {c.d_b}) : cls;
}

Tensor TsertModel::head(const Tensor& z) const {
  const Tensor logit = ops::add(ops::matmul(z, head_w_), head_b_);  // [B x 1]
  return ops::reshape(ops::sigmoid(logit), {z.dim(0)});
}

Tensor TsertModel::classify(const Tensor& z) const {
  if (z.rank() == 1) return ops::reshape(head(ops::reshape(z, {1, z.dim(0)})), {});
  return head(z);
}

Tensor TsertModel::forward(const Tensor& x, const nn::Context* ctx) const {
  const auto& c = config_;
  const bool single = x.rank() == 2;
  const Tensor xb = batched(x);
  const std::size_t b = xb.dim(0);
  Tensor probs;
  switch (c.variant) {
    case Variant::kTsert:
    case Variant::kTsertPsd:
      probs = head(spatial_hierarchy(temporal_extract(xb, ctx), ctx));
      break;
    case Variant::kSert: {
      const Tensor feats = ops::add(ops::matmul(xb, channel_proj_w_), channel_proj_b_);
      probs = head(spatial_hierarchy(feats, ctx));
      break;
    }
    case Variant::kTert: {
      const Tensor z_t = temporal_extract(xb, ctx);
      probs = head(ops::reshape(z_t, {b, c.n_channels * c.d_t}));
      break;
    }
    case Variant::kStert: {
      // Every time slice goes through the same spatial hierarchy.
      const Tensor slices = ops::permute(nn::patchify(xb, c.patches), {0, 2, 1, 3});
      const Tensor per_slice =
          spatial_hierarchy(ops::reshape(slices, {b * c.patches, c.n_channels, c.patch_len()}), ctx);
      const Tensor z0 =
          nn::embed(ops::reshape(per_slice, {b, c.patches, c.d_b}), temporal_->embedding);
      expect_shape(z0, {b, c.patches + 1, c.d_t}, "slice tokens");
      const Tensor z = nn::encode(z0, temporal_->encoder, ctx);
      probs = head(ops::reshape(ops::slice(z, 1, 0, 1), {b, c.d_t}));
      break;
    }
  }
  return single ? ops::reshape(probs, {}) : probs;
}

nn::NamedTensors TsertModel::parameters() const {
  nn::NamedTensors out;
  if (channel_proj_w_) {
    out.emplace_back("channel_proj.w", channel_proj_w_);
    out.emplace_back("channel_proj.b", channel_proj_b_);
  }
  if (temporal_) {
    temporal_->embedding.collect("temporal.embed", out);
    temporal_->encoder.collect("temporal.encoder", out);
  }
  for (std::size_t r = 0; r < electrode_.size(); ++r) {
    const std::string prefix = "electrode" + std::to_string(r);
    electrode_[r].embedding.collect(prefix + ".embed", out);
    electrode_[r].encoder.collect(prefix + ".encoder", out);
  }
  if (brain_) {
    brain_->embedding.collect("brain.embed", out);
    brain_->encoder.collect("brain.encoder", out);
  }
  out.emplace_back("head.w", head_w_);
  out.emplace_back("head.b", head_b_);
  return out;
}

std::size_t TsertModel::param_count() const { return nn::param_count(parameters()); }

std::size_t TsertModel::temporal_encoder_param_count() const {
  if (!temporal_) return 0;
  nn::NamedTensors p;
  temporal_->encoder.collect("t", p);
  return nn::param_count(p);
}

std::size_t TsertModel::spatial_encoder_param_count() const {
  nn::NamedTensors p;
  for (const auto& s : electrode_) s.encoder.collect("e", p);
  if (brain_) brain_->encoder.collect("b", p);
  return nn::param_count(p);
}

std::size_t TsertModel::temporal_stage_param_count() const {
  if (!temporal_) return 0;
  nn::NamedTensors p;
  temporal_->embedding.collect("t", p);
  temporal_->encoder.collect("t", p);
  return nn::param_count(p);
}

TsertModel build_variant(const ModelConfig& config, std::uint64_t seed) {
  return TsertModel(config, seed);
}

}  // namespace tsert
