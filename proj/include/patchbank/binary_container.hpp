#pragma once

// Shared layout of the bank (PBNK) and feature-pack (FPAK) files:
//   magic[4] | version u32 LE | header_len u32 LE | UTF-8 JSON header | float32 LE payload

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchbank/error.hpp"

namespace patchbank {

inline constexpr std::uint32_t kContainerVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace detail

struct Container {
  nlohmann::json header;
  std::vector<float> payload;
};

inline std::string encode_container(std::string_view magic, const nlohmann::json& header,
                                    std::span<const float> payload) {
  const std::string text = header.dump();
  std::string out;
  out.reserve(12 + text.size() + payload.size() * 4);
  out.append(magic.substr(0, 4));
  detail::put_u32(out, kContainerVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.append(text);
  for (float f : payload) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

// Validates framing and returns the parsed header plus the raw payload. The
// caller checks that the payload length agrees with the header.
inline Container decode_container(std::string_view bytes, std::string_view magic, std::string_view what) {
  const std::string name(what);
  if (bytes.size() < 12) throw FormatError(name + ": file too short for a header");
  if (bytes.substr(0, 4) != magic.substr(0, 4))
    throw FormatError(name + ": bad magic, expected '" + std::string(magic) + "'");
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != kContainerVersion)
    throw UnsupportedVersion(name + ": unsupported version " + std::to_string(version));
  const std::uint32_t header_len = detail::get_u32(bytes, 8);
  if (bytes.size() < 12ull + header_len) throw FormatError(name + ": truncated header");
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": corrupt header: " + e.what());
  }
  const std::string_view body = bytes.substr(12 + header_len);
  if (body.size() % 4 != 0) throw FormatError(name + ": truncated payload");
  c.payload.resize(body.size() / 4);
  for (std::size_t i = 0; i < c.payload.size(); ++i)
    c.payload[i] = std::bit_cast<float>(detail::get_u32(body, i * 4));
  return c;
}

}  // namespace patchbank
