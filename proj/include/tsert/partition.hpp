// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace tsert {

inline constexpr std::size_t kBrainRegions = 9;

struct Region {
  std::string name;
  std::vector<std::size_t> channels;  // indices into the channel order, in token order

  bool operator==(const Region&) const = default;
};

/// Ordered grouping of electrodes into brain regions.
class RegionPartition {
 public:
  RegionPartition() = default;
  explicit RegionPartition(std::vector<Region> regions) : regions_(std::move(regions)) {}

  /// Nine-region grouping of the 32-channel 10-20 montage, indexed against
  /// default_channel_labels().
  static RegionPartition default_32();

  /// Parses `Name: label, label, ...` lines (blank lines and `#` comments
  /// ignored) and resolves labels against the given channel order.
  static RegionPartition parse(std::string_view text, const std::vector<std::string>& labels);
  static RegionPartition load(const std::string& path, const std::vector<std::string>& labels);

  /// Throws ConfigError unless the regions are non-empty, pairwise disjoint and
  /// together cover 0..n_channels-1. required_regions == 0 accepts any count.
  void validate(std::size_t n_channels, std::size_t required_regions = kBrainRegions) const;

  const std::vector<Region>& regions() const { return regions_; }
  std::size_t size() const { return regions_.size(); }

  // `name:i,j,k;name:...`, the form embedded in config echoes.
  std::string to_compact() const;
  static RegionPartition from_compact(std::string_view text);

  bool operator==(const RegionPartition&) const = default;

 private:
  std::vector<Region> regions_;
};

/// DEAP channel order of the 32-channel 10-20 montage.
const std::vector<std::string>& default_channel_labels();

}  // namespace tsert
