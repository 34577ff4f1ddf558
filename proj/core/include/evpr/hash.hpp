#pragma once

#include <array>
#include <span>
#include <cstdint>
#include <string>
#include <string_view>

namespace evpr {

using Digest256 = std::array<uint8_t, 32>;

Digest256 sha256(std::string_view data);
Digest256 sha256(std::span<const uint8_t> data);
std::string to_hex(const Digest256& digest);

/// splitmix64 finalizer; combines seeds into independent RNG streams.
uint64_t mix_seed(uint64_t a, uint64_t b) noexcept;

}  // namespace evpr
