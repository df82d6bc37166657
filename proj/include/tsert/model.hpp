// SPDX-License-Identifier: Apache-2.0
//
// The temporal-spatial transformer and its ablation variants.
//
//   raw [N x d] --(shared temporal encoder per channel, mean readout)--> Z_T [N x D_T]
//     --(per-region electrode encoders, cls readout)--> R [9 x D_E]
//     --(brain-region encoder, cls readout)--> [D_B] --(sigmoid head)--> p
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsert/nn.hpp"
#include "tsert/partition.hpp"
#include "tsert/tensor.hpp"

namespace tsert {

enum class Variant { kTsert, kSert, kTert, kStert, kTsertPsd };
enum class Target { kArousal, kValence };

std::string to_string(Variant v);
std::string to_string(Target t);
Variant parse_variant(std::string_view name);
Target parse_target(std::string_view name);

struct ModelConfig {
  std::size_t n_channels = 32;
  std::size_t signal_len = 768;  // d
  std::size_t patches = 6;       // K
  std::size_t d_t = 64, d_e = 32, d_b = 64;
  std::size_t l_t = 1, l_e = 2, l_b = 2;
  std::size_t heads = 4;
  std::size_t psd_bands = 4;  // patch width of the band-power variant
  double dropout = 0.0;
  Variant variant = Variant::kTsert;
  Target target = Target::kArousal;
  RegionPartition partition = RegionPartition::default_32();
  // Require exactly nine regions; reduced-size test models turn this off.
  bool strict_regions = true;

  // Width of one temporal patch: d/K for raw input, psd_bands for PSD input.
  std::size_t patch_len() const;
  // Per-channel input length the model expects.
  std::size_t input_len() const;

  void validate() const;

  // key=value lines; from_text(to_text()) reproduces the config.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  bool operator==(const ModelConfig&) const = default;
};

class TsertModel {
 public:
  struct Stage {
    nn::EmbeddingParams embedding;
    nn::EncoderParams encoder;
  };

  /// Builds the configured variant with weights drawn from `seed`.
  TsertModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// [N x L] -> scalar probability, or [B x N x L] -> [B] probabilities,
  /// where L is config().input_len().
  Tensor forward(const Tensor& x, const nn::Context* ctx = nullptr) const;

  /// Shared per-channel extractor: [B x N x L] -> [B x N x D_T] (rank-2 input
  /// gives rank-2 output). Each channel's token rows are averaged.
  Tensor temporal_extract(const Tensor& x, const nn::Context* ctx = nullptr) const;

  /// [B x N x F] -> [B x D_B]. When region_out is given it receives one
  /// [B x D_E] representation per region, in partition order.
  Tensor spatial_hierarchy(const Tensor& features, const nn::Context* ctx = nullptr,
                           std::vector<Tensor>* region_out = nullptr) const;

  /// [B x D_B] -> [B] probabilities (rank-1 input gives a scalar).
  Tensor classify(const Tensor& z) const;

  nn::NamedTensors parameters() const;
  std::size_t param_count() const;
  std::size_t temporal_encoder_param_count() const;
  std::size_t spatial_encoder_param_count() const;
  std::size_t temporal_stage_param_count() const;

  const std::optional<Stage>& temporal() const { return temporal_; }
  const std::vector<Stage>& electrode_level() const { return electrode_; }
  const std::optional<Stage>& brain_level() const { return brain_; }
  // Mutable access for tests that pin specific weights.
  std::optional<Stage>& temporal() { return temporal_; }
  std::vector<Stage>& electrode_level() { return electrode_; }
  std::optional<Stage>& brain_level() { return brain_; }

 private:
  Tensor batched(const Tensor& x) const;
  Tensor head(const Tensor& z) const;

  ModelConfig config_;
  std::optional<Stage> temporal_;
  std::vector<Stage> electrode_;
  std::optional<Stage> brain_;
  // SERT: shared per-channel linear map d -> D_T.
  Tensor channel_proj_w_, channel_proj_b_;
  Tensor head_w_, head_b_;
};

TsertModel build_variant(const ModelConfig& config, std::uint64_t seed);

}  // namespace tsert
