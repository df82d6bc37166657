// SPDX-License-Identifier: Apache-2.0
#include "tsert/recording.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "tsert/error.hpp"

namespace tsert {

static_assert(std::endian::native == std::endian::little,
              "EEG1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'E', 'E', 'G', '1'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void put(T value) {
    os_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void bytes(const void* data, std::size_t n) { os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}
  template <typename T>
  T get(const char* what) {
    T value{};
    bytes(&value, sizeof(T), what);
    return value;
  }
  void bytes(void* data, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw TruncatedError(path_ + ": truncated while reading " + what);
    }
  }

 private:
  std::istream& is_;
  std::string path_;
};

}  // namespace

signal::ChannelMatrix EegRecording::to_matrix() const {
  return {n_channels(), n_samples, std::vector<double>(samples.begin(), samples.end())};
}

void EegRecording::validate() const {
  if (channel_labels.empty()) throw LabelMismatchError("recording has no channel labels");
  if (channel_labels.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw LabelMismatchError("too many channels for EEG1");
  }
  for (const auto& l : channel_labels) {
    if (l.empty() || l.size() > 255) {
      throw LabelMismatchError("channel labels must be 1..255 bytes, got `" + l + "`");
    }
  }
  if (samples.size() != channel_labels.size() * n_samples) {
    throw LabelMismatchError("recording holds " + std::to_string(samples.size()) +
                             " samples but " + std::to_string(channel_labels.size()) +
                             " labels x " + std::to_string(n_samples) + " samples per channel");
  }
  for (const float r : {arousal_rating, valence_rating}) {
    if (!(r >= 1.0f && r <= 9.0f)) {
      throw FormatError("rating " + std::to_string(r) + " outside [1, 9]");
    }
  }
  if (!(sample_rate > 0.0f)) throw FormatError("sample rate must be positive");
}

std::uint64_t eeg1_file_size(const EegRecording& rec) {
  std::uint64_t labels = 0;
  for (const auto& l : rec.channel_labels) labels += 1 + l.size();
  return kEeg1FixedHeader + labels + 4ULL * rec.n_channels() * rec.n_samples;
}

void write_recording(const EegRecording& rec, const std::filesystem::path& path) {
  rec.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  Writer w(os);
  w.bytes(kMagic, 4);
  w.put<std::uint16_t>(kEeg1Version);
  w.put<std::uint32_t>(rec.subject_id);
  w.put<std::uint32_t>(rec.trial_id);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(rec.n_channels()));
  w.put<float>(rec.sample_rate);
  w.put<std::uint64_t>(rec.n_samples);
  w.put<float>(rec.arousal_rating);
  w.put<float>(rec.valence_rating);
  for (const auto& l : rec.channel_labels) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.size()));
    w.bytes(l.data(), l.size());
  }
  w.bytes(rec.samples.data(), rec.samples.size() * sizeof(float));
  if (!os) throw FormatError("write failed for " + path.string());
}

EegRecording read_recording(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  Reader r(is, path.string());
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw BadMagicError(path.string() + ": not an EEG1 file (bad magic)");
  }
  const auto version = r.get<std::uint16_t>("version");
  if (version != kEeg1Version) {
    throw VersionError(path.string() + ": unsupported EEG1 version " + std::to_string(version));
  }
  EegRecording rec;
  rec.subject_id = r.get<std::uint32_t>("subject id");
  rec.trial_id = r.get<std::uint32_t>("trial id");
  const auto n_channels = r.get<std::uint16_t>("channel count");
  rec.sample_rate = r.get<float>("sample rate");
  const auto n_samples = r.get<std::uint64_t>("sample count");
  rec.arousal_rating = r.get<float>("arousal rating");
  rec.valence_rating = r.get<float>("valence rating");
  if (n_channels == 0) throw LabelMismatchError(path.string() + ": zero channels declared");
  for (std::uint16_t c = 0; c < n_channels; ++c) {
    const auto len = r.get<std::uint8_t>("label length");
    std::string label(len, '\0');
    r.bytes(label.data(), len, "label");
    rec.channel_labels.push_back(std::move(label));
  }
  // Guard the allocation against absurd headers before trusting n_samples.
  const auto here = is.tellg();
  is.seekg(0, std::ios::end);
  const auto remaining = static_cast<std::uint64_t>(is.tellg() - here);
  is.seekg(here);
  const std::uint64_t payload = 4ULL * n_channels * n_samples;
  if (n_samples != 0 && payload / n_samples / n_channels != 4) {
    throw FormatError(path.string() + ": sample count overflows");
  }
  if (remaining < payload) {
    throw TruncatedError(path.string() + ": payload holds " + std::to_string(remaining) +
                         " bytes, header declares " + std::to_string(payload));
  }
  if (remaining > payload) {
    throw FormatError(path.string() + ": " + std::to_string(remaining - payload) +
                      " trailing bytes after payload");
  }
  rec.n_samples = static_cast<std::size_t>(n_samples);
  rec.samples.resize(static_cast<std::size_t>(n_channels) * rec.n_samples);
  r.bytes(rec.samples.data(), rec.samples.size() * sizeof(float), "samples");
  rec.validate();
  return rec;
}

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<std::filesystem::path> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    out.push_back(base / line.substr(first, last - first + 1));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::filesystem::path>& relative_entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << "# EEG1 dataset manifest: one recording path per line, relative to this file\n";
  for (const auto& e : relative_entries) os << e.generic_string() << '\n';
}

}  // namespace tsert
