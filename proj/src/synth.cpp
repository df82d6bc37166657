// SPDX-License-Identifier: Apache-2.0
#include "tsert/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>

#include "tsert/error.hpp"

namespace tsert::signal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Subject {
  double gain;
  double noise;
  double alpha_hz;
  double gamma_hz;
};

}  // namespace

bool is_frontal_label(const std::string& label) {
  if (label.rfind("Fp", 0) == 0 || label.rfind("AF", 0) == 0) return true;
  return label.size() >= 2 && label[0] == 'F' &&
         (std::isdigit(static_cast<unsigned char>(label[1])) || label[1] == 'z');
}

std::vector<EegRecording> synth_generate(const SynthOptions& opts) {
  if (opts.n_subjects < 2) throw ConfigError("synthetic dataset needs at least two subjects");
  if (opts.trials_per_subject == 0) throw ConfigError("trials_per_subject must be positive");
  if (opts.channel_labels.empty()) throw ConfigError("channel layout is empty");
  if (!(opts.segment_seconds > 0.0 && opts.segment_seconds <= opts.trial_seconds)) {
    throw ConfigError("segment must fit inside the trial");
  }
  if (!(opts.burst_seconds > 0.0 && opts.burst_seconds <= opts.segment_seconds)) {
    throw ConfigError("burst must fit inside a segment");
  }
  const double fs = opts.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(opts.trial_seconds * fs));
  const auto burst_n = static_cast<std::size_t>(std::llround(opts.burst_seconds * fs));
  const auto segment_n = static_cast<std::size_t>(std::llround(opts.segment_seconds * fs));
  const std::size_t n_segments = n / segment_n;
  const std::size_t n_ch = opts.channel_labels.size();

  std::vector<bool> frontal(n_ch);
  for (std::size_t c = 0; c < n_ch; ++c) frontal[c] = is_frontal_label(opts.channel_labels[c]);

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<EegRecording> out;
  for (std::size_t s = 0; s < opts.n_subjects; ++s) {
    const Subject subj{uniform(0.7, 1.4), uniform(0.8, 1.25), uniform(9.0, 11.0), uniform(34.0, 42.0)};

    std::vector<int> classes(opts.trials_per_subject);
    for (std::size_t t = 0; t < classes.size(); ++t) classes[t] = t % 2 == 0 ? 1 : 0;
    std::shuffle(classes.begin(), classes.end(), rng);

    for (std::size_t t = 0; t < opts.trials_per_subject; ++t) {
      EegRecording rec;
      rec.subject_id = static_cast<std::uint32_t>(s + 1);
      rec.trial_id = static_cast<std::uint32_t>(t + 1);
      rec.channel_labels = opts.channel_labels;
      rec.sample_rate = static_cast<float>(fs);
      rec.n_samples = n;
      rec.arousal_rating = classes[t] ? kHighRating : kLowRating;
      rec.valence_rating = rec.arousal_rating;
      rec.samples.resize(n_ch * n);

      const bool high = classes[t] == 1;
      const double burst_hz = high ? subj.gamma_hz + uniform(-1.0, 1.0) : subj.alpha_hz + uniform(-0.5, 0.5);
      std::vector<std::size_t> burst_start(n_segments);
      for (std::size_t k = 0; k < n_segments; ++k) {
        burst_start[k] = k * segment_n +
                         static_cast<std::size_t>(uniform(0.0, static_cast<double>(segment_n - burst_n)));
      }
      const double burst_phase = uniform(0.0, kTwoPi);
      const double drift_hz = uniform(0.1, 0.5);

      for (std::size_t c = 0; c < n_ch; ++c) {
        const double alpha_amp = uniform(0.2, 0.4);
        const double alpha_phase = uniform(0.0, kTwoPi);
        const double drift_amp = uniform(0.5, 2.0);
        const double drift_phase = uniform(0.0, kTwoPi);
        const double mains_amp = uniform(0.1, 0.3);
        const double channel_amp = frontal[c] ? opts.burst_amplitude * uniform(0.8, 1.2) : 0.0;
        const double channel_phase = burst_phase + uniform(-0.3, 0.3);
        double colored = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double time = static_cast<double>(i) / fs;
          colored = 0.9 * colored + 0.3 * gauss(rng);
          double v = subj.noise * (0.8 * gauss(rng) + colored);
          v += alpha_amp * std::sin(kTwoPi * subj.alpha_hz * time + alpha_phase);
          v += drift_amp * std::sin(kTwoPi * drift_hz * time + drift_phase);
          v += mains_amp * std::sin(kTwoPi * 50.0 * time);
          const std::size_t k = std::min(i / segment_n, n_segments - 1);
          if (channel_amp > 0.0 && i >= burst_start[k] && i < burst_start[k] + burst_n) {
            const double u = static_cast<double>(i - burst_start[k]) / static_cast<double>(burst_n);
            const double envelope = 0.5 - 0.5 * std::cos(kTwoPi * u);
            v += channel_amp * envelope * std::sin(kTwoPi * burst_hz * time + channel_phase);
          }
          rec.samples[c * n + i] = static_cast<float>(subj.gain * v);
        }
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::vector<EegRecording> synth_generate(std::size_t n_subjects, std::size_t trials_per_subject,
                                         std::uint64_t seed,
                                         const std::vector<std::string>& layout) {
  SynthOptions opts;
  opts.n_subjects = n_subjects;
  opts.trials_per_subject = trials_per_subject;
  opts.seed = seed;
  opts.channel_labels = layout;
  return synth_generate(opts);
}

}  // namespace tsert::signal
