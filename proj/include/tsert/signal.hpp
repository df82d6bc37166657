// SPDX-License-Identifier: Apache-2.0
//
// EEG preprocessing: integer-ratio resampling, zero-phase Butterworth
// band-pass, fixed-length windowing and Welch band-power features.
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tsert::signal {

/// Multichannel signal stored channel-major: values[c * samples + t].
struct ChannelMatrix {
  std::size_t channels = 0;
  std::size_t samples = 0;
  std::vector<double> values;

  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(values).subspan(c * samples, samples);
  }
  std::span<double> channel(std::size_t c) {
    return std::span<double>(values).subspan(c * samples, samples);
  }
};

struct FilterSpec {
  double low_hz = 4.0;
  double high_hz = 45.0;
  // Order of the analog low-pass prototype; the band-pass has twice as many poles.
  int order = 4;
  bool zero_phase = true;

  void validate(double fs) const;
};

/// One second-order section in direct form II transposed, a0 == 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

struct Band {
  std::string name;
  double low_hz;
  double high_hz;  // exclusive
};

struct BandSet {
  std::vector<Band> bands;

  /// theta [4,8), alpha [8,13), beta [13,30), gamma [30,47).
  static BandSet standard();
  void validate(double fs) const;
  std::size_t size() const { return bands.size(); }
};

inline constexpr double kLogPowerFloor = 1e-12;

/// Integer decimation by f_in/f_out after a zero-phase windowed-sinc
/// anti-alias filter. Output length is floor(n * f_out / f_in).
std::vector<double> resample(std::span<const double> x, double f_in, double f_out);

std::vector<Biquad> design_bandpass(const FilterSpec& spec, double fs);

/// Single forward pass through the cascade, starting from zero state.
std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x);

/// Band-pass filter. With spec.zero_phase the cascade runs forward then
/// backward over an odd-extended copy of x, seeded with steady-state
/// initial conditions, so there is no phase lag.
std::vector<double> bandpass(std::span<const double> x, const FilterSpec& spec, double fs);

/// Splits an N x T trial into floor((T - W) / hop) + 1 segments of W = win_s * fs
/// samples, hop = W * (1 - overlap). The tail remainder is dropped.
std::vector<ChannelMatrix> window(const ChannelMatrix& trial, double fs, double win_s = 6.0,
                                  double overlap = 0.0);

struct Spectrum {
  std::vector<double> freqs;
  std::vector<double> power;  // one-sided density
};

/// Welch estimate: periodic Hann window, 50% overlap, mean-removed segments,
/// segment length min(n, max_segment).
Spectrum welch(std::span<const double> x, double fs, std::size_t max_segment = 128);

/// Natural log of the mean Welch density in each band, floored at
/// kLogPowerFloor. Throws ConfigError when a band holds no frequency bins.
std::vector<double> psd_features(std::span<const double> x, double fs, const BandSet& bands);

/// Hook for an artifact-removal stage (e.g. ICA). The default is identity.
using ArtifactStage = std::function<void(ChannelMatrix&, double fs)>;

struct PreprocessOptions {
  double target_rate = 128.0;
  FilterSpec filter;
  ArtifactStage artifact_stage;  // empty means pass-through
  double window_s = 6.0;
  double overlap = 0.0;
};

/// Resamples every channel to target_rate, band-passes it, then runs the
/// artifact stage. Windowing is left to the caller.
ChannelMatrix preprocess(const ChannelMatrix& raw, double fs, const PreprocessOptions& opts);

}  // namespace tsert::signal
