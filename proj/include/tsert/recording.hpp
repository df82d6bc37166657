// SPDX-License-Identifier: Apache-2.0
//
// EEG1 recording files and dataset manifests.
//
// EEG1 layout, all integers and floats little-endian:
//
//   offset  size  field
//   0       4     magic "EEG1"
//   4       2     version (u16, currently 1)
//   6       4     subject id (u32)
//   10      4     trial id (u32)
//   14      2     channel count N (u16)
//   16      4     sample rate in Hz (f32)
//   20      8     samples per channel T (u64)
//   28      4     arousal rating (f32)
//   32      4     valence rating (f32)
//   36      ...   N labels, each u8 length followed by that many bytes
//   ...     4*N*T samples as f32, channel-major
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsert/signal.hpp"

namespace tsert {

inline constexpr std::uint16_t kEeg1Version = 1;
inline constexpr std::size_t kEeg1FixedHeader = 36;

struct EegRecording {
  std::uint32_t subject_id = 0;
  std::uint32_t trial_id = 0;
  std::vector<std::string> channel_labels;
  float sample_rate = 0.0f;
  std::size_t n_samples = 0;   // T, per channel
  std::vector<float> samples;  // N x T, channel-major
  float arousal_rating = 1.0f;
  float valence_rating = 1.0f;

  std::size_t n_channels() const { return channel_labels.size(); }
  std::span<const float> channel(std::size_t c) const {
    return std::span<const float>(samples).subspan(c * n_samples, n_samples);
  }
  signal::ChannelMatrix to_matrix() const;

  /// Throws LabelMismatchError / FormatError when fields are inconsistent.
  void validate() const;

  bool operator==(const EegRecording&) const = default;
};

std::uint64_t eeg1_file_size(const EegRecording& rec);

void write_recording(const EegRecording& rec, const std::filesystem::path& path);
EegRecording read_recording(const std::filesystem::path& path);

/// One relative path per line; blank lines and `#` comments are skipped.
/// Paths resolve against the manifest's directory.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::filesystem::path>& relative_entries);

}  // namespace tsert
