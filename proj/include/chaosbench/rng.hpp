#pragma once

// Counter-based random numbers (Philox4x32-10). A draw is a pure function of
// (seed, replica, step, particle, block, tag), so replicas can be simulated in
// any order, on any number of threads, and in any chunking without changing a
// single bit of the output.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <utility>

namespace chaosbench {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace detail

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    detail::mulhilo32(kM0, ctr[0], hi0, lo0);
    detail::mulhilo32(kM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

// Purpose tags keep the noise used for increments, initial positions and
// resampling disjoint.
enum class StreamTag : std::uint32_t {
  kIncrement = 0,
  kInitialNormal = 1,
  kInitialUniform = 2,
  kResample = 3,
};

// All randomness belonging to one replica of one experiment.
class ReplicaStream {
 public:
  ReplicaStream(std::uint64_t seed, std::uint64_t replica) noexcept {
    const std::uint64_t k = detail::splitmix64(detail::splitmix64(seed) ^ (replica * 0xD1B54A32D192ED03ULL + 1));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  // Four raw 32-bit words for a counter position.
  Philox4x32Counter raw(std::uint64_t step, std::uint32_t particle, std::uint32_t block, StreamTag tag) const noexcept {
    const Philox4x32Counter ctr{static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), particle,
                                (block & 0x00FFFFFFu) | (static_cast<std::uint32_t>(tag) << 24)};
    return philox4x32_10(ctr, key_);
  }

  // Two open-interval uniforms in (0, 1).
  std::pair<double, double> uniform_pair(std::uint64_t step, std::uint32_t particle, std::uint32_t block,
                                         StreamTag tag) const noexcept {
    const auto w = raw(step, particle, block, tag);
    return {to_open_unit((static_cast<std::uint64_t>(w[0]) << 32) | w[1]),
            to_open_unit((static_cast<std::uint64_t>(w[2]) << 32) | w[3])};
  }

  // Two independent standard normals (Box-Muller).
  std::pair<double, double> normal_pair(std::uint64_t step, std::uint32_t particle, std::uint32_t block,
                                        StreamTag tag) const noexcept {
    const auto [u1, u2] = uniform_pair(step, particle, block, tag);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(a), r * std::sin(a)};
  }

  // Fills `out` with standard normals for (step, particle); coordinates are
  // drawn in pairs from consecutive blocks.
  void normals(std::uint64_t step, std::uint32_t particle, StreamTag tag, std::span<double> out) const noexcept {
    for (std::size_t c = 0; c < out.size(); c += 2) {
      const auto [z0, z1] = normal_pair(step, particle, static_cast<std::uint32_t>(c / 2), tag);
      out[c] = z0;
      if (c + 1 < out.size()) out[c + 1] = z1;
    }
  }

  void uniforms(std::uint64_t step, std::uint32_t particle, StreamTag tag, std::span<double> out) const noexcept {
    for (std::size_t c = 0; c < out.size(); c += 2) {
      const auto [u0, u1] = uniform_pair(step, particle, static_cast<std::uint32_t>(c / 2), tag);
      out[c] = u0;
      if (c + 1 < out.size()) out[c + 1] = u1;
    }
  }

 private:
  static double to_open_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  Philox4x32Key key_{};
};

// Derives an independent seed for a named sub-job of an experiment.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  return detail::splitmix64(seed ^ detail::splitmix64(salt + 0x632BE59BD9B4E019ULL));
}

inline std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (const char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace chaosbench
