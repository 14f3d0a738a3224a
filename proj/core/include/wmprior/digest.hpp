#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace wmprior {

// 64-bit FNV-1a. Stable across platforms; used for request digests,
// replay-store checksums and the hashed bag-of-words embedder.
constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v);

// Digest of an arbitrary canonical serialization, as a fixed-width hex string.
std::string content_digest(std::string_view canonical);

// splitmix64, used to derive independent per-trial RNG streams.
std::uint64_t mix64(std::uint64_t x);

}  // namespace wmprior
