#pragma once

#include <cstdint>

namespace sopt {

// Every random stream in a run derives from the one top-level seed:
// derive_seed(seed, tag) = splitmix64(seed ^ tag). Tags are fixed per purpose.
namespace seed_tag {
inline constexpr std::uint64_t kNetInit = 0x4e45545f494e4954ULL;    // "NET_INIT"
inline constexpr std::uint64_t kShapes = 0x5348415045530000ULL;     // "SHAPES"
inline constexpr std::uint64_t kHeldOut = 0x48454c444f555400ULL;    // "HELDOUT"
inline constexpr std::uint64_t kSplit = 0x53504c4954000000ULL;      // "SPLIT"
inline constexpr std::uint64_t kShuffle = 0x53485546464c4500ULL;    // "SHUFFLE"
inline constexpr std::uint64_t kParamInit = 0x504152414d000000ULL;  // "PARAM"
inline constexpr std::uint64_t kAscent = 0x415343454e540000ULL;     // "ASCENT"
inline constexpr std::uint64_t kPaint = 0x5041494e54000000ULL;      // "PAINT"
inline constexpr std::uint64_t kTexture = 0x5445585455524500ULL;    // "TEXTURE"
}  // namespace seed_tag

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) { return splitmix64(seed ^ tag); }

// Seed for the index-th item of a stream, e.g. one image of a dataset.
constexpr std::uint64_t item_seed(std::uint64_t stream_seed, std::uint64_t index) {
  return splitmix64(stream_seed + splitmix64(index));
}

}  // namespace sopt
