// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "tsert/model.hpp"
#include "tsert/recording.hpp"
#include "tsert/signal.hpp"

namespace tsert {

enum class RatingClass { kLow, kHigh, kDiscard };

/// 1..4 -> low, 6..9 -> high, anything strictly between -> discard.
/// Throws ConfigError outside [1, 9].
RatingClass binarize(double rating);

/// One model input window with the labels that survived binarization.
struct Sample {
  std::uint32_t subject_id = 0;
  std::uint32_t trial_id = 0;
  std::size_t n_channels = 0;
  std::size_t length = 0;  // per-channel input length
  std::vector<double> x;   // n_channels x length, channel-major
  std::optional<int> y_arousal;
  std::optional<int> y_valence;

  std::optional<int> label(Target target) const {
    return target == Target::kArousal ? y_arousal : y_valence;
  }
};

/// Windows a preprocessed recording into samples. Ratings are binarized once
/// per target; a window is kept when at least one target has a label.
std::vector<Sample> make_samples(const EegRecording& preprocessed, double window_s = 6.0,
                                 double overlap = 0.0);

/// Replaces every channel row with K per-slice band-power vectors
/// (length K * bands.size()).
Sample to_psd_form(const Sample& raw, std::size_t patches, double fs,
                   const signal::BandSet& bands = signal::BandSet::standard());

/// Resamples/filters when the recording is not already at target_rate.
EegRecording preprocess_recording(const EegRecording& raw,
                                  const signal::PreprocessOptions& opts = {});

/// Loads a manifest, preprocesses every recording as needed and windows it.
std::vector<Sample> load_samples(const std::filesystem::path& manifest,
                                 const signal::PreprocessOptions& opts = {});

struct Fold {
  std::uint32_t test_subject = 0;
  std::vector<std::size_t> train;  // indices into the sample list
  std::vector<std::size_t> test;
};

struct FoldPlan {
  std::vector<Fold> folds;  // ascending test subject
};

/// One fold per distinct subject. Throws ConfigError with fewer than two
/// subjects; asserts no subject appears on both sides of any fold.
FoldPlan loso_split(const std::vector<Sample>& samples);

/// Indices of samples carrying a label for target.
std::vector<std::size_t> labelled(const std::vector<Sample>& samples,
                                  const std::vector<std::size_t>& indices, Target target);

/// Holds out about `fraction` of the (subject, trial) pairs in indices, chosen
/// deterministically from seed, so windows of one trial never straddle the
/// split. Returns {train, validation}.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_trial(
    const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
    double fraction, std::uint64_t seed);

/// Seeded permutation of 0..n-1 cut into consecutive batches; the last
/// batch may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed);

/// Stacks the selected samples into a [B x N x L] tensor.
Tensor stack_inputs(const std::vector<Sample>& samples, std::span<const std::size_t> indices);

}  // namespace tsert
