// SPDX-License-Identifier: Apache-2.0
#include "tsert/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include "tsert/error.hpp"

namespace tsert::signal {

namespace {

using cplx = std::complex<double>;

constexpr double kPi = std::numbers::pi;

bool is_integer_ratio(double num, double den, long& ratio) {
  const double r = num / den;
  ratio = std::lround(r);
  return ratio >= 1 && std::abs(r - static_cast<double>(ratio)) < 1e-9;
}

// Odd extension: x[-i] = 2 x[0] - x[i], x[n-1+i] = 2 x[n-1] - x[n-1-i].
std::vector<double> odd_extend(std::span<const double> x, std::size_t pad) {
  const std::size_t n = x.size();
  std::vector<double> out(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) out[pad - 1 - i] = 2.0 * x[0] - x[i + 1];
  std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) out[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  return out;
}

// State of each section that makes the cascade's response to a constant
// unit input constant from the first sample.
std::vector<std::array<double, 2>> steady_state(std::span<const Biquad> sections) {
  std::vector<std::array<double, 2>> zi;
  double level = 1.0;
  for (const auto& s : sections) {
    const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double y = gain * level;
    zi.push_back({y - s.b0 * level, s.b2 * level - s.a2 * y});
    level = y;
  }
  return zi;
}

void run_cascade(std::span<const Biquad> sections, std::vector<double>& x,
                 std::vector<std::array<double, 2>> state) {
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const auto& s = sections[k];
    double z1 = state[k][0], z2 = state[k][1];
    for (auto& v : x) {
      const double in = v;
      const double y = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * y + z2;
      z2 = s.b2 * in - s.a2 * y;
      v = y;
    }
  }
}

std::vector<double> hann_periodic(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void FilterSpec::validate(double fs) const {
  if (!(fs > 0.0)) throw ConfigError("sample rate must be positive");
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0)) {
    throw ConfigError("band-pass needs 0 < low < high < fs/2; got " + std::to_string(low_hz) +
                      ".." + std::to_string(high_hz) + " Hz at fs=" + std::to_string(fs));
  }
  if (order < 2 || order % 2 != 0) throw ConfigError("band-pass prototype order must be even and >= 2");
}

BandSet BandSet::standard() {
  return BandSet{{{"theta", 4.0, 8.0}, {"alpha", 8.0, 13.0}, {"beta", 13.0, 30.0},
                  {"gamma", 30.0, 47.0}}};
}

void BandSet::validate(double fs) const {
  if (bands.empty()) throw ConfigError("band set is empty");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    const auto& b = bands[i];
    if (!(b.low_hz > 0.0 && b.low_hz < b.high_hz && b.high_hz <= fs / 2.0)) {
      throw ConfigError("band `" + b.name + "` must lie within (0, fs/2]");
    }
    if (i > 0 && b.low_hz < bands[i - 1].high_hz) {
      throw ConfigError("bands must be ascending and non-overlapping at `" + b.name + "`");
    }
  }
}

std::vector<double> resample(std::span<const double> x, double f_in, double f_out) {
  if (!(f_in > 0.0 && f_out > 0.0)) throw ConfigError("sample rates must be positive");
  long q = 0;
  if (!is_integer_ratio(f_in, f_out, q)) {
    throw ConfigError("resampling supports integer decimation only; " + std::to_string(f_in) +
                      " -> " + std::to_string(f_out) + " Hz is not");
  }
  if (q == 1) return {x.begin(), x.end()};
  const auto factor = static_cast<std::size_t>(q);
  if (x.size() < 2) throw ConfigError("signal too short to resample");

  // Blackman-windowed sinc, cutoff at 90% of the output Nyquist.
  const std::size_t half = 32 * factor;
  const double cutoff = 0.45 / static_cast<double>(factor);  // cycles per input sample
  std::vector<double> taps(2 * half + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const double m = static_cast<double>(i) - static_cast<double>(half);
    const double sinc = m == 0.0 ? 2.0 * cutoff : std::sin(2.0 * kPi * cutoff * m) / (kPi * m);
    const double phase = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(taps.size() - 1);
    const double blackman = 0.42 - 0.5 * std::cos(phase) + 0.08 * std::cos(2.0 * phase);
    taps[i] = sinc * blackman;
    total += taps[i];
  }
  for (auto& t : taps) t /= total;

  const std::size_t pad = std::min(half, x.size() - 1);
  const auto ext = odd_extend(x, pad);
  const std::size_t n_out = x.size() / factor;
  std::vector<double> out(n_out);
  for (std::size_t m = 0; m < n_out; ++m) {
    const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(m * factor + pad);
    double acc = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
      const std::ptrdiff_t j = center + static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(half);
      if (j >= 0 && j < static_cast<std::ptrdiff_t>(ext.size())) acc += taps[i] * ext[static_cast<std::size_t>(j)];
    }
    out[m] = acc;
  }
  return out;
}

std::vector<Biquad> design_bandpass(const FilterSpec& spec, double fs) {
  spec.validate(fs);
  const int n = spec.order;
  // Pre-warped analog band edges for the bilinear transform.
  const double w1 = 2.0 * fs * std::tan(kPi * spec.low_hz / fs);
  const double w2 = 2.0 * fs * std::tan(kPi * spec.high_hz / fs);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  std::vector<cplx> upper, real;
  for (int k = 0; k < n; ++k) {
    const cplx p = std::polar(1.0, kPi * (2.0 * k + n + 1) / (2.0 * n));
    const cplx disc = std::sqrt(p * p * bw * bw - 4.0 * w0sq);
    for (const cplx s : {(p * bw + disc) / 2.0, (p * bw - disc) / 2.0}) {
      const cplx z = (2.0 * fs + s) / (2.0 * fs - s);
      if (std::abs(z) >= 1.0) throw ConfigError("band-pass design is unstable for these edges");
      if (z.imag() > 1e-12) {
        upper.push_back(z);
      } else if (std::abs(z.imag()) <= 1e-12) {
        real.push_back(z);
      }
    }
  }
  if (real.size() % 2 != 0) throw ConfigError("band-pass design produced an unpaired real pole");

  std::vector<Biquad> sections;
  for (const auto& z : upper) sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  for (std::size_t i = 0; i < real.size(); i += 2) {
    sections.push_back({1.0, 0.0, -1.0, -(real[i].real() + real[i + 1].real()),
                        real[i].real() * real[i + 1].real()});
  }
  if (sections.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("band-pass design produced " + std::to_string(sections.size()) +
                      " sections, expected " + std::to_string(n));
  }

  // Unit gain at the digital image of the analog center frequency.
  const double omega0 = 2.0 * std::atan(std::sqrt(w0sq) / (2.0 * fs));
  const cplx zinv = std::polar(1.0, -omega0);
  double mag = 1.0;
  for (const auto& s : sections) {
    const cplx num = s.b0 + s.b1 * zinv + s.b2 * zinv * zinv;
    const cplx den = 1.0 + s.a1 * zinv + s.a2 * zinv * zinv;
    mag *= std::abs(num / den);
  }
  const double per_section = std::pow(1.0 / mag, 1.0 / static_cast<double>(sections.size()));
  for (auto& s : sections) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return sections;
}

std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_cascade(sections, y, std::vector<std::array<double, 2>>(sections.size(), {0.0, 0.0}));
  return y;
}

std::vector<double> bandpass(std::span<const double> x, const FilterSpec& spec, double fs) {
  const auto sections = design_bandpass(spec, fs);
  if (!spec.zero_phase) return sosfilt(sections, x);
  if (x.size() < 2) throw ConfigError("signal too short to filter");

  const auto zi = steady_state(sections);
  auto scaled = [&](double level) {
    auto s = zi;
    for (auto& st : s) {
      st[0] *= level;
      st[1] *= level;
    }
    return s;
  };
  const std::size_t pad = std::min<std::size_t>(x.size() - 1, 3 * (2 * sections.size() + 1));
  auto y = odd_extend(x, pad);
  run_cascade(sections, y, scaled(y.front()));
  std::reverse(y.begin(), y.end());
  run_cascade(sections, y, scaled(y.front()));
  std::reverse(y.begin(), y.end());
  return {y.begin() + static_cast<std::ptrdiff_t>(pad),
          y.begin() + static_cast<std::ptrdiff_t>(pad + x.size())};
}

std::vector<ChannelMatrix> window(const ChannelMatrix& trial, double fs, double win_s,
                                  double overlap) {
  if (!(fs > 0.0 && win_s > 0.0)) throw ConfigError("window length and sample rate must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("window overlap must lie in [0, 1)");
  const auto width = static_cast<std::size_t>(std::llround(win_s * fs));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(width) * (1.0 - overlap))));
  if (width == 0 || trial.samples < width) {
    throw ConfigError("trial of " + std::to_string(trial.samples) +
                      " samples is shorter than one window of " + std::to_string(width));
  }
  std::vector<ChannelMatrix> out;
  for (std::size_t start = 0; start + width <= trial.samples; start += hop) {
    ChannelMatrix seg{trial.channels, width, std::vector<double>(trial.channels * width)};
    for (std::size_t c = 0; c < trial.channels; ++c) {
      const auto src = trial.channel(c).subspan(start, width);
      std::copy(src.begin(), src.end(), seg.channel(c).begin());
    }
    out.push_back(std::move(seg));
  }
  return out;
}

Spectrum welch(std::span<const double> x, double fs, std::size_t max_segment) {
  if (x.empty()) throw ConfigError("welch: empty signal");
  const std::size_t nperseg = std::min(x.size(), max_segment);
  const std::size_t step = std::max<std::size_t>(1, nperseg - nperseg / 2);
  const std::size_t nbins = nperseg / 2 + 1;
  const auto win = hann_periodic(nperseg);
  double win_energy = 0.0;
  for (auto w : win) win_energy += w * w;

  double* in = fftw_alloc_real(nperseg);
  fftw_complex* out = fftw_alloc_complex(nbins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(nperseg), in, out, FFTW_ESTIMATE);
  }

  Spectrum spec;
  spec.power.assign(nbins, 0.0);
  std::size_t segments = 0;
  for (std::size_t start = 0; start + nperseg <= x.size(); start += step) {
    double mu = 0.0;
    for (std::size_t i = 0; i < nperseg; ++i) mu += x[start + i];
    mu /= static_cast<double>(nperseg);
    for (std::size_t i = 0; i < nperseg; ++i) in[i] = (x[start + i] - mu) * win[i];
    fftw_execute(plan);
    for (std::size_t k = 0; k < nbins; ++k) {
      spec.power[k] += out[k][0] * out[k][0] + out[k][1] * out[k][1];
    }
    ++segments;
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);

  const double norm = 1.0 / (fs * win_energy * static_cast<double>(segments));
  for (std::size_t k = 0; k < nbins; ++k) {
    const bool edge = k == 0 || (nperseg % 2 == 0 && k == nbins - 1);
    spec.power[k] *= norm * (edge ? 1.0 : 2.0);
  }
  spec.freqs.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k) {
    spec.freqs[k] = static_cast<double>(k) * fs / static_cast<double>(nperseg);
  }
  return spec;
}

std::vector<double> psd_features(std::span<const double> x, double fs, const BandSet& bands) {
  bands.validate(fs);
  const auto spec = welch(x, fs);
  std::vector<double> out;
  out.reserve(bands.size());
  for (const auto& band : bands.bands) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < spec.freqs.size(); ++k) {
      if (spec.freqs[k] >= band.low_hz && spec.freqs[k] < band.high_hz) {
        total += spec.power[k];
        ++count;
      }
    }
    if (count == 0) {
      throw ConfigError("band `" + band.name + "` contains no frequency bins at resolution " +
                        std::to_string(spec.freqs.size() > 1 ? spec.freqs[1] : fs) + " Hz");
    }
    out.push_back(std::log(std::max(total / static_cast<double>(count), kLogPowerFloor)));
  }
  return out;
}

ChannelMatrix preprocess(const ChannelMatrix& raw, double fs, const PreprocessOptions& opts) {
  ChannelMatrix out;
  out.channels = raw.channels;
  for (std::size_t c = 0; c < raw.channels; ++c) {
    const auto down = resample(raw.channel(c), fs, opts.target_rate);
    const auto filtered = bandpass(down, opts.filter, opts.target_rate);
    if (c == 0) {
      out.samples = filtered.size();
      out.values.reserve(raw.channels * out.samples);
    }
    out.values.insert(out.values.end(), filtered.begin(), filtered.end());
  }
  if (opts.artifact_stage) opts.artifact_stage(out, opts.target_rate);
  return out;
}

}  // namespace tsert::signal
