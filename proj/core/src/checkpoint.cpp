#include "savg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "savg/errors.hpp"

namespace savg::nn {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'V', 'G'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<uint64_t>(v)); }

uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw InvalidInputError("checkpoint '" + path + "': truncated");
  }
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is, const std::string& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw InvalidInputError("checkpoint '" + path + "': truncated");
  }
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInputError("checkpoint: cannot write '" + path + "'");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u64(os, store.all().size());
  for (const auto& p : store.all()) {
    put_u64(os, p->name.size());
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    const Shape& s = p->tensor.shape();
    put_u64(os, s.size());
    for (size_t d : s) put_u64(os, d);
    for (double v : p->tensor.value()) put_f64(os, v);
  }
  if (!os) throw InvalidInputError("checkpoint: write failed for '" + path + "'");
}

std::map<std::string, CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInputError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw InvalidInputError("checkpoint '" + path + "': bad magic");
  }
  const uint32_t version = get_u32(is, path);
  if (version != kVersion) {
    throw InvalidInputError("checkpoint '" + path + "': unsupported version " +
                            std::to_string(version));
  }
  const uint64_t count = get_u64(is, path);
  std::map<std::string, CheckpointEntry> entries;
  for (uint64_t r = 0; r < count; ++r) {
    const uint64_t name_len = get_u64(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len))) {
      throw InvalidInputError("checkpoint '" + path + "': truncated name");
    }
    CheckpointEntry e;
    const uint64_t rank = get_u64(is, path);
    e.shape.resize(rank);
    size_t numel = 1;
    for (uint64_t d = 0; d < rank; ++d) {
      e.shape[d] = get_u64(is, path);
      numel *= e.shape[d];
    }
    e.data.resize(numel);
    for (size_t i = 0; i < numel; ++i) e.data[i] = std::bit_cast<double>(get_u64(is, path));
    if (!entries.emplace(std::move(name), std::move(e)).second) {
      throw InvalidInputError("checkpoint '" + path + "': duplicate record");
    }
  }
  return entries;
}

void load_checkpoint(const std::string& path, ParamStore& store) {
  auto entries = read_checkpoint(path);
  for (const auto& p : store.all()) {
    auto it = entries.find(p->name);
    if (it == entries.end()) {
      throw ConfigError("checkpoint '" + path + "': missing parameter '" + p->name + "'");
    }
    if (it->second.shape != p->tensor.shape()) {
      throw ConfigError("checkpoint '" + path + "': shape mismatch for '" + p->name +
                              "' (" + shape_str(it->second.shape) + " vs " +
                              shape_str(p->tensor.shape()) + ")");
    }
    p->tensor.raw() = it->second.data;
    entries.erase(it);
  }
  if (!entries.empty()) {
    throw ConfigError("checkpoint '" + path + "': unknown parameter '" +
                            entries.begin()->first + "'");
  }
}

}  // namespace savg::nn
