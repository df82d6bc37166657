// SPDX-License-Identifier: Apache-2.0
#include "tsert/profiles.hpp"

#include <string>

namespace tsert {

Profile parse_profile(std::string_view name) {
  if (name == "paper") return Profile::kPaper;
  if (name == "desk") return Profile::kDesk;
  throw ConfigError("unknown profile `" + std::string(name) + "` (expected paper or desk)");
}

ModelConfig model_profile(Profile profile) {
  ModelConfig c;
  if (profile == Profile::kDesk) {
    c.d_t = 16;
    c.d_e = 16;
    c.d_b = 16;
    c.l_t = 1;
    c.l_e = 1;
    c.l_b = 1;
  }
  return c;
}

TrainConfig train_profile(Profile profile) {
  TrainConfig t;
  if (profile == Profile::kDesk) {
    t.lr = 1e-3;
    t.batch_size = 64;
    t.max_epochs = 40;
    t.patience = 10;
  }
  return t;
}

ModelConfig reduced_config(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.n_channels = 4;
  c.signal_len = 32;
  c.patches = 4;
  c.d_t = 8;
  c.d_e = 8;
  c.d_b = 8;
  c.l_t = 1;
  c.l_e = 1;
  c.l_b = 1;
  c.heads = 4;
  c.psd_bands = 4;
  c.strict_regions = false;
  c.partition = RegionPartition({{"r0", {0}}, {"r1", {1}}, {"r2", {2}}, {"r3", {3}}});
  return c;
}

}  // namespace tsert
