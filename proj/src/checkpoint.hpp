#pragma once

#include <iosfwd>
#include <string>

#include "tensor.hpp"

namespace swinchex {

// Binary checkpoint layout, all integers and reals little-endian:
//   "SWCX1"
//   repeated, sorted by path:
//     u64 path_length, path bytes (UTF-8), u64 rank, rank x u64 dims,
//     numel x f64 values
inline constexpr char kCheckpointMagic[] = "SWCX1";

void write_checkpoint(std::ostream& out, const ParamSet& params);
ParamSet read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const ParamSet& params);
ParamSet load_checkpoint(const std::string& path);

}  // namespace swinchex
