#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace fuserank {

// Mixes a global seed with a component tag so every stage draws from its own
// reproducible stream.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view tag);

// Deterministic generator. The engine is std::mt19937_64, whose output is
// fixed by the standard; the distributions below are written out here so the
// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on [0, n). n must be positive.
  std::size_t index(std::size_t n);
  double gaussian(double mean = 0.0, double stddev = 1.0);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fuserank
