#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "errors.hpp"

namespace swinchex {

namespace {

constexpr std::size_t kMagicLength = sizeof(kCheckpointMagic) - 1;
constexpr std::uint64_t kMaxRank = 16;
constexpr std::uint64_t kMaxPathLength = 4096;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

bool get_u64(std::istream& in, std::uint64_t& v) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return true;
}

std::uint64_t need_u64(std::istream& in, const char* what) {
  std::uint64_t v;
  if (!get_u64(in, v)) throw DataError(std::string("checkpoint truncated while reading ") + what);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamSet& params) {
  out.write(kCheckpointMagic, kMagicLength);
  for (const auto& [path, t] : params) {
    put_u64(out, path.size());
    out.write(path.data(), static_cast<std::streamsize>(path.size()));
    put_u64(out, t.rank());
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw DataError("failed writing checkpoint");
}

ParamSet read_checkpoint(std::istream& in) {
  char magic[kMagicLength];
  if (!in.read(magic, kMagicLength) || std::memcmp(magic, kCheckpointMagic, kMagicLength) != 0) {
    throw DataError("not a checkpoint: missing SWCX1 header");
  }
  ParamSet params;
  std::uint64_t path_length;
  while (get_u64(in, path_length)) {
    if (path_length == 0 || path_length > kMaxPathLength) {
      throw DataError("checkpoint: invalid path length " + std::to_string(path_length));
    }
    std::string path(path_length, '\0');
    if (!in.read(path.data(), static_cast<std::streamsize>(path_length))) {
      throw DataError("checkpoint truncated in parameter path");
    }
    const std::uint64_t rank = need_u64(in, "rank");
    if (rank > kMaxRank) throw DataError("checkpoint: rank too large for '" + path + "'");
    Shape shape(rank);
    for (auto& d : shape) d = need_u64(in, "dims");
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<double>(need_u64(in, "values"));
    try {
      params.add(path, Tensor::parameter(std::move(shape), std::move(values)));
    } catch (const ShapeError& e) {
      throw DataError(std::string("checkpoint: ") + e.what());
    }
  }
  if (!in.eof() || in.gcount() != 0) throw DataError("checkpoint truncated in parameter path length");
  return params;
}

void save_checkpoint(const std::string& path, const ParamSet& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_checkpoint(out, params);
}

ParamSet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace swinchex
