#pragma once

// Counter-based random streams.
//
// Every draw is a pure function of (key, index): no hidden generator state,
// so sample i of trial t of experiment k is the same number whether it is
// produced serially, in parallel, or in isolation.  Sub-seed derivation is
// a documented hash chain:
//
//   experiment key = mix64(master_seed ^ mix64(kind_tag))
//   trial key      = derive(experiment key, trial_index)
//   sample key     = derive(trial key, sample_index)
//   draw i         = mix64(sample key + (i+1) * kGolden)
//
// mix64 is the Stafford variant-13 finalizer, the output function of
// splitmix64; one stream is therefore exactly a splitmix64 sequence.

#include <cstdint>
#include <cmath>
#include <numbers>

namespace raregrad::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Child stream key: position `index` under parent `key`.
constexpr std::uint64_t derive(std::uint64_t key, std::uint64_t index) noexcept {
  return mix64(key + kGolden * (index + 1));
}

// Key for a named experiment kind under a master seed.
constexpr std::uint64_t experiment_key(std::uint64_t master_seed,
                                       std::uint64_t kind_tag) noexcept {
  return mix64(master_seed ^ mix64(kind_tag + kGolden));
}

class Stream {
 public:
  constexpr explicit Stream(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t bits(std::uint64_t i) const noexcept {
    return mix64(key_ + kGolden * (i + 1));
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform(std::uint64_t i) const noexcept {
    return static_cast<double>(bits(i) >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_open(std::uint64_t i) const noexcept {
    return static_cast<double>((bits(i) >> 11) + 1) * 0x1.0p-53;
  }

  // j-th standard normal of a sequence whose uniforms start at index `base`.
  // Box-Muller pairs: normals (2k, 2k+1) share uniforms (base+2k, base+2k+1),
  // so consecutive draws cost one transcendental pair per two normals and
  // any draw is still addressable at random.
  double normal(std::uint64_t base, std::uint64_t j) const noexcept {
    const std::uint64_t k = j / 2;
    const double u1 = uniform_open(base + 2 * k);
    const double u2 = uniform(base + 2 * k + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return (j % 2 == 0) ? r * std::cos(a) : r * std::sin(a);
  }

  constexpr Stream child(std::uint64_t index) const noexcept {
    return Stream(derive(key_, index));
  }

  constexpr std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

}  // namespace raregrad::rng
