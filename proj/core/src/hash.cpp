#include "evpr/hash.hpp"

#include <openssl/evp.h>

#include "evpr/error.hpp"

namespace evpr {

Digest256 sha256(std::string_view data) {
  Digest256 out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw Error(ErrorCode::InvalidArgument, "SHA-256 digest failed");
  }
  return out;
}

Digest256 sha256(std::span<const uint8_t> data) {
  return sha256(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

std::string to_hex(const Digest256& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (uint8_t b : digest) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xF]);
  }
  return s;
}

uint64_t mix_seed(uint64_t a, uint64_t b) noexcept {
  uint64_t z = a + 0x9E3779B97F4A7C15ULL + (b << 6) + (b >> 2);
  z ^= b * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace evpr
