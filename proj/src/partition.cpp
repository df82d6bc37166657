// SPDX-License-Identifier: Apache-2.0
#include "tsert/partition.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "tsert/error.hpp"

namespace tsert {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

const std::vector<std::string>& default_channel_labels() {
  static const std::vector<std::string> labels = {
      "Fp1", "AF3", "F3",  "F7",  "FC5", "FC1", "C3",  "T7",  "CP5", "CP1", "P3",
      "P7",  "PO3", "O1",  "Oz",  "Pz",  "Fp2", "AF4", "Fz",  "F4",  "F8",  "FC6",
      "FC2", "Cz",  "C4",  "T8",  "CP6", "CP2", "P4",  "P8",  "PO4", "O2"};
  return labels;
}

RegionPartition RegionPartition::default_32() {
  static constexpr std::string_view kText =
      "Pre-frontal: Fp1, Fp2, AF3, AF4\n"
      "Frontal: F7, F3, Fz, F4, F8\n"
      "Left-temporal: FC5, T7, CP5\n"
      "Right-temporal: FC6, T8, CP6\n"
      "Central: FC1, FC2, C3, Cz, C4\n"
      "Centro-parietal: CP1, CP2, Pz\n"
      "Left-parietal: P7, P3\n"
      "Right-parietal: P4, P8\n"
      "Occipital: PO3, PO4, O1, Oz, O2\n";
  return parse(kText, default_channel_labels());
}

RegionPartition RegionPartition::parse(std::string_view text,
                                       const std::vector<std::string>& labels) {
  std::vector<Region> regions;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    auto line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("partition line " + std::to_string(line_no) + ": expected `name: labels`");
    }
    Region region{std::string(trim(line.substr(0, colon))), {}};
    if (region.name.empty()) {
      throw ConfigError("partition line " + std::to_string(line_no) + ": empty region name");
    }
    for (auto item : split(line.substr(colon + 1), ',')) {
      const auto label = trim(item);
      if (label.empty()) continue;
      const auto it = std::find(labels.begin(), labels.end(), label);
      if (it == labels.end()) {
        throw ConfigError("partition line " + std::to_string(line_no) + ": unknown channel `" +
                          std::string(label) + "`");
      }
      region.channels.push_back(static_cast<std::size_t>(it - labels.begin()));
    }
    regions.push_back(std::move(region));
  }
  return RegionPartition(std::move(regions));
}

RegionPartition RegionPartition::load(const std::string& path,
                                      const std::vector<std::string>& labels) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open partition file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), labels);
}

void RegionPartition::validate(std::size_t n_channels, std::size_t required_regions) const {
  if (required_regions != 0 && regions_.size() != required_regions) {
    throw ConfigError("partition has " + std::to_string(regions_.size()) + " regions, expected " +
                      std::to_string(required_regions));
  }
  if (regions_.empty()) throw ConfigError("partition has no regions");
  std::vector<int> owner(n_channels, -1);
  for (std::size_t r = 0; r < regions_.size(); ++r) {
    if (regions_[r].channels.empty()) {
      throw ConfigError("region `" + regions_[r].name + "` has no electrodes");
    }
    for (auto c : regions_[r].channels) {
      if (c >= n_channels) {
        throw ConfigError("region `" + regions_[r].name + "` references channel " +
                          std::to_string(c) + " of " + std::to_string(n_channels));
      }
      if (owner[c] >= 0) {
        throw ConfigError("channel " + std::to_string(c) + " assigned to both `" +
                          regions_[static_cast<std::size_t>(owner[c])].name + "` and `" +
                          regions_[r].name + "`");
      }
      owner[c] = static_cast<int>(r);
    }
  }
  const auto missing = std::find(owner.begin(), owner.end(), -1);
  if (missing != owner.end()) {
    throw ConfigError("channel " + std::to_string(missing - owner.begin()) +
                      " is not assigned to any region");
  }
}

std::string RegionPartition::to_compact() const {
  std::ostringstream os;
  for (std::size_t r = 0; r < regions_.size(); ++r) {
    if (r) os << ';';
    os << regions_[r].name << ':';
    for (std::size_t i = 0; i < regions_[r].channels.size(); ++i) {
      if (i) os << ',';
      os << regions_[r].channels[i];
    }
  }
  return os.str();
}

RegionPartition RegionPartition::from_compact(std::string_view text) {
  std::vector<Region> regions;
  for (auto part : split(text, ';')) {
    if (trim(part).empty()) continue;
    const auto colon = part.find(':');
    if (colon == std::string_view::npos) throw ConfigError("bad compact partition entry");
    Region region{std::string(part.substr(0, colon)), {}};
    for (auto item : split(part.substr(colon + 1), ',')) {
      if (item.empty()) continue;
      try {
        region.channels.push_back(std::stoul(std::string(item)));
      } catch (const std::exception&) {
        throw ConfigError("bad channel index `" + std::string(item) + "` in partition");
      }
    }
    regions.push_back(std::move(region));
  }
  return RegionPartition(std::move(regions));
}

}  // namespace tsert
