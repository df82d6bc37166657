// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multi-subject EEG with a known emotion class per trial.
//
// Every channel carries colored background noise, slow drift, mains hum and a
// weak alpha rhythm. During one randomly placed burst per segment, the frontal
// and pre-frontal channels oscillate in the gamma band for high-class trials
// and in the alpha band for low-class trials. Each subject gets its own gain
// and noise floor.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tsert/partition.hpp"
#include "tsert/recording.hpp"

namespace tsert::signal {

struct SynthOptions {
  std::size_t n_subjects = 6;
  std::size_t trials_per_subject = 40;
  std::uint64_t seed = 1;
  std::vector<std::string> channel_labels = default_channel_labels();
  double sample_rate = 512.0;
  double trial_seconds = 12.0;
  double segment_seconds = 6.0;  // one burst inside every segment of this length
  double burst_seconds = 2.0;
  double burst_amplitude = 8.0;  // relative to the unit-variance white background
};

inline constexpr float kHighRating = 8.0f;
inline constexpr float kLowRating = 2.0f;

/// True for pre-frontal (Fp*, AF*) and frontal (F<digit>, Fz) labels.
bool is_frontal_label(const std::string& label);

std::vector<EegRecording> synth_generate(const SynthOptions& opts);
std::vector<EegRecording> synth_generate(std::size_t n_subjects, std::size_t trials_per_subject,
                                         std::uint64_t seed,
                                         const std::vector<std::string>& layout);

}  // namespace tsert::signal
