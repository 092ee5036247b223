#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>

#include <json.hpp>

#include "bpinn/errors.hpp"
#include "bpinn/network.hpp"

namespace bpinn {

// Checkpoint layout (all integers and floats little-endian):
//   bytes  0..11  magic "burgers-pinn"
//   bytes 12..15  u32 format version (1)
//   bytes 16..19  u32 hidden layer count n_l
//   bytes 20..23  u32 units per hidden layer n_n
//   bytes 24..27  u32 precision in bits (32 or 64)
//   bytes 28..    parameters, layer by layer: W row-major, then bias
inline constexpr char kCheckpointMagic[12] = {'b', 'u', 'r', 'g', 'e', 'r',
                                              's', '-', 'p', 'i', 'n', 'n'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint32_t hidden_layers = 0;
  std::uint32_t hidden_units = 0;
  std::uint32_t precision_bits = 0;
};

namespace detail {

inline void put_u32_le(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

template <class Scalar>
void put_scalar_le(std::ostream& os, Scalar v) {
  using Bits = std::conditional_t<sizeof(Scalar) == 4, std::uint32_t, std::uint64_t>;
  Bits bits = std::bit_cast<Bits>(v);
  unsigned char b[sizeof(Bits)];
  for (std::size_t i = 0; i < sizeof(Bits); ++i)
    b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), sizeof(Bits));
}

template <class Scalar>
Scalar get_scalar_le(std::istream& is) {
  using Bits = std::conditional_t<sizeof(Scalar) == 4, std::uint32_t, std::uint64_t>;
  unsigned char b[sizeof(Bits)];
  is.read(reinterpret_cast<char*>(b), sizeof(Bits));
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(Bits); ++i) bits |= Bits(b[i]) << (8 * i);
  return std::bit_cast<Scalar>(bits);
}

}  // namespace detail

/// Write the binary checkpoint and a JSON sidecar (<path>.json) mirroring
/// the metadata.
template <class Scalar>
void save_checkpoint(const std::string& path, const MlpParams<Scalar>& p) {
  static_assert(sizeof(Scalar) == 4 || sizeof(Scalar) == 8);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32_le(os, kCheckpointVersion);
  detail::put_u32_le(os, p.arch().hidden_layers);
  detail::put_u32_le(os, p.arch().hidden_units);
  detail::put_u32_le(os, sizeof(Scalar) * 8);
  for (const Scalar v : p.values()) detail::put_scalar_le(os, v);
  if (!os) throw IoError("checkpoint write failed: " + path);
  os.close();

  nlohmann::json meta{{"format_version", kCheckpointVersion},
                      {"hidden_layers", p.arch().hidden_layers},
                      {"hidden_units", p.arch().hidden_units},
                      {"precision", sizeof(Scalar) == 4 ? "f32" : "f64"},
                      {"parameter_count", p.size()}};
  std::ofstream js(path + ".json", std::ios::trunc);
  if (!js) throw IoError("cannot open checkpoint sidecar for writing: " + path + ".json");
  js << meta.dump(2) << "\n";
}

inline CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw IoError("not a checkpoint file (bad magic): " + path);
  const std::uint32_t version = detail::get_u32_le(is);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  CheckpointInfo info;
  info.hidden_layers = detail::get_u32_le(is);
  info.hidden_units = detail::get_u32_le(is);
  info.precision_bits = detail::get_u32_le(is);
  if (!is) throw IoError("truncated checkpoint header: " + path);
  return info;
}

template <class Scalar>
MlpParams<Scalar> load_checkpoint(const std::string& path) {
  static_assert(sizeof(Scalar) == 4 || sizeof(Scalar) == 8);
  const CheckpointInfo info = peek_checkpoint(path);
  if (info.precision_bits != sizeof(Scalar) * 8)
    throw IoError("checkpoint precision is f" + std::to_string(info.precision_bits) +
                  ", requested f" + std::to_string(sizeof(Scalar) * 8) + ": " + path);
  Architecture arch{info.hidden_layers, info.hidden_units};
  arch.validate();
  MlpParams<Scalar> p(arch);
  std::ifstream is(path, std::ios::binary);
  is.seekg(28);
  for (Scalar& v : p.values()) v = detail::get_scalar_le<Scalar>(is);
  if (!is) throw IoError("truncated checkpoint payload: " + path);
  // Must be exactly at end of file.
  is.get();
  if (!is.eof()) throw IoError("checkpoint has trailing bytes: " + path);
  return p;
}

}  // namespace bpinn
