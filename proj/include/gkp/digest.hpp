#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "gkp/error.hpp"

namespace gkp {

inline constexpr std::string_view kDigestAlgorithm = "sha256";

inline std::array<unsigned char, 32> sha256_bytes(std::string_view data) {
  std::array<unsigned char, 32> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(),
                 nullptr) != 1 ||
      len != out.size())
    throw Error(ErrorCode::io_error, "sha256 failed");
  return out;
}

/// Lowercase hex SHA-256 of `data`.
inline std::string sha256_hex(std::string_view data) {
  static constexpr char kHex[] = "0123456789abcdef";
  const auto bytes = sha256_bytes(data);
  std::string hex;
  hex.reserve(64);
  for (unsigned char b : bytes) {
    hex.push_back(kHex[b >> 4]);
    hex.push_back(kHex[b & 0x0f]);
  }
  return hex;
}

/// First eight digest bytes, big-endian.
inline std::uint64_t sha256_u64(std::string_view data) {
  const auto bytes = sha256_bytes(data);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | bytes[i];
  return v;
}

} // namespace gkp
