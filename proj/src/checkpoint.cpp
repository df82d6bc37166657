// SPDX-License-Identifier: Apache-2.0
#include "tsert/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tsert/error.hpp"

namespace tsert {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', 'K'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void read_exact(std::istream& is, void* dst, std::size_t n, const std::string& what) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw TruncatedError("checkpoint truncated while reading " + what);
  }
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  read_exact(is, &v, sizeof(T), what);
  return v;
}

}  // namespace

std::uint64_t checkpoint_size(const TsertModel& model) {
  std::uint64_t size = 4 + 2 + 4 + model.config().to_text().size() + 4 + 8;
  for (const auto& [name, t] : model.parameters()) {
    size += 2 + name.size() + 1 + 4 * t.rank() + 8 * t.numel();
  }
  return size;
}

void save_checkpoint(const TsertModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  const auto config = model.config().to_text();
  const auto params = model.parameters();
  os.write(kMagic, 4);
  put<std::uint16_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(config.size()));
  os.write(config.data(), static_cast<std::streamsize>(config.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  put<std::uint64_t>(os, nn::param_count(params));
  for (const auto& [name, t] : params) {
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw FormatError("write failed for " + path.string());
}

TsertModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  char magic[4];
  read_exact(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw BadMagicError(path.string() + ": not a checkpoint");
  const auto version = get<std::uint16_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw VersionError(path.string() + ": checkpoint version " + std::to_string(version) +
                       ", expected " + std::to_string(kCheckpointVersion));
  }
  std::string config(get<std::uint32_t>(is, "config length"), '\0');
  read_exact(is, config.data(), config.size(), "config");
  TsertModel model(ModelConfig::from_text(config), 0);

  auto params = model.parameters();
  const auto count = get<std::uint32_t>(is, "tensor count");
  const auto scalars = get<std::uint64_t>(is, "scalar count");
  if (count != params.size() || scalars != nn::param_count(params)) {
    throw FormatError(path.string() + ": manifest lists " + std::to_string(count) + " tensors / " +
                      std::to_string(scalars) + " scalars, config implies " +
                      std::to_string(params.size()) + " / " +
                      std::to_string(nn::param_count(params)));
  }
  for (auto& [name, tensor] : params) {
    std::string stored(get<std::uint16_t>(is, "name length"), '\0');
    read_exact(is, stored.data(), stored.size(), "tensor name");
    if (stored != name) {
      throw FormatError(path.string() + ": expected tensor `" + name + "`, found `" + stored + "`");
    }
    Shape shape(get<std::uint8_t>(is, "rank of " + name));
    for (auto& d : shape) d = get<std::uint32_t>(is, "dims of " + name);
    if (shape != tensor.shape()) {
      throw FormatError(path.string() + ": tensor `" + name + "` has shape " + to_string(shape) +
                        ", model expects " + to_string(tensor.shape()));
    }
    auto dst = tensor.mutable_data();
    read_exact(is, dst.data(), dst.size() * sizeof(double), "values of " + name);
    check_finite(dst, "load_checkpoint");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes after last tensor");
  }
  return model;
}

}  // namespace tsert
