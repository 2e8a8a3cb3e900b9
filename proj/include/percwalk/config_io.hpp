#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "percwalk/configuration.hpp"
#include "percwalk/error.hpp"

namespace percwalk {

/// Binary configuration format, version 1, all integers little-endian:
///
///   offset size field
///        0    4 magic "PWCF"
///        4    2 format version (1)
///        6    1 dimension d
///        7    1 kind (0 bond, 1 site)
///        8    4 side length L
///       12    1 boundary (0 torus, 1 Dirichlet box)
///       13    1 model tag (ModelTag value)
///       14    2 reserved, zero
///       16   32 p, q, u, h as IEEE-754 binary64
///       48    4 Glauber / Gibbs sweeps
///       52    4 reserved, zero
///       56    8 seed
///       64    8 bit count n (d*L^d for bond, L^d for site)
///       72      ceil(n/8) bytes, bit i stored in byte i/8 at position i%8
inline constexpr std::array<char, 4> kConfigMagic = {'P', 'W', 'C', 'F'};
inline constexpr std::uint16_t kConfigFormatVersion = 1;
inline constexpr std::size_t kConfigHeaderSize = 72;

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t value, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

inline std::uint64_t get_le(const std::vector<std::uint8_t>& in, std::size_t offset, int bytes) {
  std::uint64_t value = 0;
  for (int i = 0; i < bytes; ++i)
    value |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  return value;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_configuration(const Configuration& config) {
  const auto& lattice = config.lattice();
  const auto& params = config.params();
  std::vector<std::uint8_t> out;
  out.reserve(kConfigHeaderSize + config.bits().size() / 8 + 1);
  for (char c : kConfigMagic) out.push_back(static_cast<std::uint8_t>(c));
  detail::put_le(out, kConfigFormatVersion, 2);
  detail::put_le(out, static_cast<std::uint64_t>(lattice.dim()), 1);
  detail::put_le(out, static_cast<std::uint64_t>(config.kind()), 1);
  detail::put_le(out, static_cast<std::uint64_t>(lattice.side()), 4);
  detail::put_le(out, static_cast<std::uint64_t>(lattice.boundary()), 1);
  detail::put_le(out, static_cast<std::uint64_t>(params.model), 1);
  detail::put_le(out, 0, 2);
  for (double v : {params.p, params.q, params.u, params.h})
    detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  detail::put_le(out, params.sweeps, 4);
  detail::put_le(out, 0, 4);
  detail::put_le(out, params.seed, 8);
  const auto& bits = config.bits();
  detail::put_le(out, bits.size(), 8);
  std::vector<std::uint8_t> packed((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  out.insert(out.end(), packed.begin(), packed.end());
  return out;
}

inline Configuration decode_configuration(const std::vector<std::uint8_t>& in) {
  if (in.size() < kConfigHeaderSize || std::memcmp(in.data(), kConfigMagic.data(), 4) != 0)
    throw InvalidArgument("not a percwalk configuration file");
  if (detail::get_le(in, 4, 2) != kConfigFormatVersion)
    throw InvalidArgument("unsupported configuration format version");
  const int dim = static_cast<int>(detail::get_le(in, 6, 1));
  const auto kind_raw = detail::get_le(in, 7, 1);
  const int side = static_cast<int>(detail::get_le(in, 8, 4));
  const auto boundary_raw = detail::get_le(in, 12, 1);
  const auto model_raw = detail::get_le(in, 13, 1);
  detail::require(kind_raw <= 1 && boundary_raw <= 1 && model_raw <= 5,
                  "corrupt configuration header");
  Lattice lattice(dim, side, static_cast<Boundary>(boundary_raw));
  ModelParams params;
  params.model = static_cast<ModelTag>(model_raw);
  params.p = std::bit_cast<double>(detail::get_le(in, 16, 8));
  params.q = std::bit_cast<double>(detail::get_le(in, 24, 8));
  params.u = std::bit_cast<double>(detail::get_le(in, 32, 8));
  params.h = std::bit_cast<double>(detail::get_le(in, 40, 8));
  params.sweeps = static_cast<std::uint32_t>(detail::get_le(in, 48, 4));
  params.seed = detail::get_le(in, 56, 8);
  const std::uint64_t count = detail::get_le(in, 64, 8);
  detail::require(in.size() == kConfigHeaderSize + (count + 7) / 8,
                  "configuration payload length mismatch");
  std::vector<std::uint8_t> bits(count);
  for (std::uint64_t i = 0; i < count; ++i)
    bits[i] = (in[kConfigHeaderSize + i / 8] >> (i % 8)) & 1u;
  return Configuration(lattice, static_cast<PercolationKind>(kind_raw), std::move(bits), params);
}

/// Lossless JSON debug form.
inline nlohmann::json configuration_to_json(const Configuration& config) {
  const auto& lattice = config.lattice();
  const auto& params = config.params();
  std::string bits(config.bits().size(), '0');
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (config.bits()[i]) bits[i] = '1';
  return {
      {"format", "percwalk-configuration"},
      {"version", kConfigFormatVersion},
      {"d", lattice.dim()},
      {"L", lattice.side()},
      {"boundary", lattice.periodic() ? "torus" : "dirichlet"},
      {"kind", config.kind() == PercolationKind::bond ? "bond" : "site"},
      {"model",
       {{"type", std::string(model_name(params.model))},
        {"p", params.p},
        {"q", params.q},
        {"u", params.u},
        {"h", params.h},
        {"sweeps", params.sweeps}}},
      {"seed", params.seed},
      {"bits", bits},
  };
}

inline Configuration configuration_from_json(const nlohmann::json& j) {
  try {
    Lattice lattice(j.at("d").get<int>(), j.at("L").get<int>(),
                    j.at("boundary").get<std::string>() == "torus" ? Boundary::periodic
                                                                   : Boundary::dirichlet);
    const auto& m = j.at("model");
    ModelParams params;
    params.model = parse_model(m.at("type").get<std::string>());
    params.p = m.at("p").get<double>();
    params.q = m.at("q").get<double>();
    params.u = m.at("u").get<double>();
    params.h = m.at("h").get<double>();
    params.sweeps = m.at("sweeps").get<std::uint32_t>();
    params.seed = j.at("seed").get<std::uint64_t>();
    const auto text = j.at("bits").get<std::string>();
    std::vector<std::uint8_t> bits(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      detail::require(text[i] == '0' || text[i] == '1', "bits must be a 0/1 string");
      bits[i] = text[i] == '1';
    }
    const auto kind =
        j.at("kind").get<std::string>() == "bond" ? PercolationKind::bond : PercolationKind::site;
    return Configuration(lattice, kind, std::move(bits), params);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed configuration JSON: ") + e.what());
  }
}

inline void write_configuration(const std::string& path, const Configuration& config) {
  const auto bytes = encode_configuration(config);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Configuration read_configuration(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_configuration(bytes);
}

}  // namespace percwalk
