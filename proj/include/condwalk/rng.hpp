#pragma once

// Counter-based hashing for the lazy conductance field and seeded streams
// for walk noise. The constants below fix the field bit-for-bit:
//
//   fmix(z):  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//             z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31
//   edge hash of (seed, base, axis):
//     h = fmix(seed + 0x9E3779B97F4A7C15)
//     for i in 0..d-1: h = fmix(h ^ (uint64(base_i) * 0xD6E8FEB86659FD93 + (i+1) * 0xA0761D6478BD642F))
//     h = fmix(h ^ ((axis+1) * 0xE7037ED1A0B428DB))
//   uniform: ((h >> 11) + 0.5) * 2^-53, always strictly inside (0,1).

#include <cstdint>
#include <random>
#include <span>

namespace condwalk {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t fmix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t hash_edge(std::uint64_t seed, std::span<const std::int64_t> base, int axis) noexcept {
  std::uint64_t h = fmix64(seed + kGolden);
  for (std::size_t i = 0; i < base.size(); ++i) {
    h = fmix64(h ^ (static_cast<std::uint64_t>(base[i]) * 0xD6E8FEB86659FD93ULL +
                    static_cast<std::uint64_t>(i + 1) * 0xA0761D6478BD642FULL));
  }
  return fmix64(h ^ (static_cast<std::uint64_t>(axis + 1) * 0xE7037ED1A0B428DBULL));
}

/// Maps 64 random bits to the open interval (0,1).
constexpr double to_open_unit(std::uint64_t h) noexcept {
  return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

/// Child seed for stream `stream`, item `index` of a master seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) noexcept {
  return fmix64(fmix64(master ^ (stream * 0xC2B2AE3D27D4EB4FULL)) + index * kGolden);
}

/// Sequential generator for step noise and sampling; independent of the edge hash.
class StreamRng {
 public:
  explicit StreamRng(std::uint64_t seed) : eng_(fmix64(seed ^ 0x5851F42D4C957F2DULL)) {}

  double uniform() noexcept { return to_open_unit(eng_()); }
  std::uint64_t bits() noexcept { return eng_(); }
  std::uint64_t below(std::uint64_t n) noexcept { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace condwalk
