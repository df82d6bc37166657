// SPDX-License-Identifier: Apache-2.0
//
// Named hyperparameter sets. `paper` is the full-size configuration
// (D_T=64, D_E=32, D_B=64, L_T=1, L_E=2, L_B=2, lr 1e-4, batch 512, 80
// epochs); `desk` shrinks widths and depths so a six-subject cross-validation
// finishes in minutes on one CPU core.
#pragma once

#include <string_view>

#include "tsert/model.hpp"
#include "tsert/train.hpp"

namespace tsert {

enum class Profile { kPaper, kDesk };

Profile parse_profile(std::string_view name);
ModelConfig model_profile(Profile profile);
TrainConfig train_profile(Profile profile);

/// Four channels, four one-electrode regions, d=32, K=4, widths 8: small
/// enough for exhaustive finite-difference checks.
ModelConfig reduced_config(Variant variant = Variant::kTsert);

}  // namespace tsert
