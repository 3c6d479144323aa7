#pragma once

#include <map>
#include <string>

#include "savg/tensor.hpp"

namespace savg::nn {

struct CheckpointEntry {
  Shape shape;
  std::vector<double> data;
};

// Binary parameter snapshot. Layout: magic "SAVG", format version (u32),
// record count (u64), then per record: name length (u64) + UTF-8 name,
// rank (u64) + dims (u64 each), raw little-endian f64 payload.
// Round trips are bit-exact.
void save_checkpoint(const std::string& path, const ParamStore& store);

std::map<std::string, CheckpointEntry> read_checkpoint(const std::string& path);

// Strict restore: every parameter in the store must appear in the file with a
// matching shape, and the file may not contain unknown names.
void load_checkpoint(const std::string& path, ParamStore& store);

}  // namespace savg::nn
