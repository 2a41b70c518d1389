#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace deception_lq {

/// Philox4x32-10 (Salmon et al., SC'11). Stateless: the output is a pure
/// function of (key, counter), so any draw can be regenerated independently
/// of the order or thread in which draws are made.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;

  explicit constexpr Philox4x32(std::uint64_t seed) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  constexpr Counter operator()(Counter ctr) const noexcept {
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, key);
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter single_round(const Counter& c,
                                        const std::array<std::uint32_t, 2>& k) noexcept {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }

  std::array<std::uint32_t, 2> key_;
};

/// Pair of independent standard normals keyed by (seed, path, step).
/// Channel 0 drives the velocity noise B, channel 1 the observation noise W.
class NormalStream {
 public:
  explicit constexpr NormalStream(std::uint64_t seed) noexcept : philox_(seed) {}

  std::pair<double, double> normals(std::uint64_t path, std::uint64_t step) const noexcept {
    const auto r = philox_({static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                            static_cast<std::uint32_t>(path),
                            static_cast<std::uint32_t>(path >> 32)});
    // 53-bit uniforms in (0, 1).
    const double u1 = to_unit((static_cast<std::uint64_t>(r[0]) << 32) | r[1]);
    const double u2 = to_unit((static_cast<std::uint64_t>(r[2]) << 32) | r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

 private:
  static double to_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  Philox4x32 philox_;
};

}  // namespace deception_lq
