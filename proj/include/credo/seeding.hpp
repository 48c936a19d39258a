#pragma once

#include <cstdint>
#include <string_view>

namespace credo {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Stable per-component seed ("data", "init", "dropout", ...) derived from the
// global experiment seed.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view component) {
    return splitmix64(global_seed ^ fnv1a64(component));
}

}  // namespace credo
