// SPDX-License-Identifier: Apache-2.0
#include "tsert/data.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "tsert/error.hpp"

namespace tsert {

RatingClass binarize(double rating) {
  if (!(rating >= 1.0 && rating <= 9.0)) {
    throw ConfigError("rating " + std::to_string(rating) + " outside [1, 9]");
  }
  if (rating <= 4.0) return RatingClass::kLow;
  if (rating >= 6.0) return RatingClass::kHigh;
  return RatingClass::kDiscard;
}

namespace {

std::optional<int> as_label(double rating) {
  switch (binarize(rating)) {
    case RatingClass::kLow: return 0;
    case RatingClass::kHigh: return 1;
    case RatingClass::kDiscard: return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

std::vector<Sample> make_samples(const EegRecording& rec, double window_s, double overlap) {
  const auto arousal = as_label(rec.arousal_rating);
  const auto valence = as_label(rec.valence_rating);
  if (!arousal && !valence) return {};
  std::vector<Sample> out;
  for (auto& seg : signal::window(rec.to_matrix(), rec.sample_rate, window_s, overlap)) {
    Sample s;
    s.subject_id = rec.subject_id;
    s.trial_id = rec.trial_id;
    s.n_channels = seg.channels;
    s.length = seg.samples;
    s.x = std::move(seg.values);
    s.y_arousal = arousal;
    s.y_valence = valence;
    out.push_back(std::move(s));
  }
  return out;
}

Sample to_psd_form(const Sample& raw, std::size_t patches, double fs,
                   const signal::BandSet& bands) {
  if (patches == 0 || raw.length % patches != 0) {
    throw ConfigError("window of " + std::to_string(raw.length) + " samples does not split into " +
                      std::to_string(patches) + " slices");
  }
  const std::size_t slice = raw.length / patches;
  Sample out = raw;
  out.length = patches * bands.size();
  out.x.clear();
  out.x.reserve(raw.n_channels * out.length);
  for (std::size_t c = 0; c < raw.n_channels; ++c) {
    for (std::size_t k = 0; k < patches; ++k) {
      const auto seg = std::span<const double>(raw.x).subspan(c * raw.length + k * slice, slice);
      const auto feats = signal::psd_features(seg, fs, bands);
      out.x.insert(out.x.end(), feats.begin(), feats.end());
    }
  }
  return out;
}

EegRecording preprocess_recording(const EegRecording& raw, const signal::PreprocessOptions& opts) {
  if (static_cast<double>(raw.sample_rate) == opts.target_rate) return raw;
  const auto m = signal::preprocess(raw.to_matrix(), raw.sample_rate, opts);
  EegRecording out = raw;
  out.sample_rate = static_cast<float>(opts.target_rate);
  out.n_samples = m.samples;
  out.samples.assign(m.values.begin(), m.values.end());
  return out;
}

std::vector<Sample> load_samples(const std::filesystem::path& manifest,
                                 const signal::PreprocessOptions& opts) {
  std::vector<Sample> out;
  for (const auto& path : read_manifest(manifest)) {
    const auto rec = preprocess_recording(read_recording(path), opts);
    auto samples = make_samples(rec, opts.window_s, opts.overlap);
    std::move(samples.begin(), samples.end(), std::back_inserter(out));
  }
  return out;
}

FoldPlan loso_split(const std::vector<Sample>& samples) {
  std::map<std::uint32_t, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < samples.size(); ++i) by_subject[samples[i].subject_id].push_back(i);
  if (by_subject.size() < 2) {
    throw ConfigError("leave-one-subject-out needs at least two subjects, got " +
                      std::to_string(by_subject.size()));
  }
  FoldPlan plan;
  for (const auto& [subject, test] : by_subject) {
    Fold fold{subject, {}, test};
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].subject_id != subject) fold.train.push_back(i);
    }
    std::set<std::uint32_t> train_subjects;
    for (auto i : fold.train) train_subjects.insert(samples[i].subject_id);
    if (train_subjects.count(subject) != 0) {
      throw Error("fold for subject " + std::to_string(subject) + " leaks test subject into training");
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

std::vector<std::size_t> labelled(const std::vector<Sample>& samples,
                                  const std::vector<std::size_t>& indices, Target target) {
  std::vector<std::size_t> out;
  for (auto i : indices) {
    if (samples[i].label(target)) out.push_back(i);
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_trial(
    const std::vector<Sample>& samples, const std::vector<std::size_t>& indices, double fraction,
    std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in [0, 1)");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> trials;
  for (auto i : indices) trials.emplace_back(samples[i].subject_id, samples[i].trial_id);
  std::sort(trials.begin(), trials.end());
  trials.erase(std::unique(trials.begin(), trials.end()), trials.end());
  std::mt19937_64 rng(seed);
  std::shuffle(trials.begin(), trials.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(trials.size())));
  const std::set<std::pair<std::uint32_t, std::uint32_t>> held(trials.begin(),
                                                               trials.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (auto i : indices) {
    const bool val = held.count({samples[i].subject_id, samples[i].trial_id}) != 0;
    (val ? out.second : out.first).push_back(i);
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const auto end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Tensor stack_inputs(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DimensionError("cannot stack an empty batch");
  const auto& first = samples[indices.front()];
  std::vector<double> values;
  values.reserve(indices.size() * first.x.size());
  for (auto i : indices) {
    const auto& s = samples[i];
    if (s.n_channels != first.n_channels || s.length != first.length) {
      throw DimensionError("samples in one batch differ in shape");
    }
    values.insert(values.end(), s.x.begin(), s.x.end());
  }
  return Tensor::from({indices.size(), first.n_channels, first.length}, std::move(values));
}

}  // namespace tsert
