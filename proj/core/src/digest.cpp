#include "wmprior/digest.hpp"

#include <array>

namespace wmprior {

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::string content_digest(std::string_view canonical) {
    // Two passes with different offset bases; 128 bits is plenty for a
    // cache key at the scale of one run.
    std::uint64_t a = fnv1a64(canonical);
    std::uint64_t b = fnv1a64(canonical, 0x9e3779b97f4a7c15ULL);
    return hex64(a) + hex64(b);
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace wmprior
