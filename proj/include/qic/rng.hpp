#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qic {

// Seedable random stream. The engine is std::mt19937_64 (bit-exact per the
// C++ standard); uniform doubles and bounded integers are produced from raw
// 64-bit words with fixed arithmetic, so two builds with the same seed emit
// identical draws. Independent streams are derived from a parent seed with
// the splitmix64 finalizer: derive(seed, k) = mix(seed ^ mix(k + GOLDEN)).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform over {0, ..., n-1} by masked rejection (exactly uniform).
  int uniform_int(int n);

  // Standard normal via Box-Muller on two uniform draws; the spare value is
  // cached, so draws come in deterministic pairs.
  double normal();

  static std::uint64_t mix(std::uint64_t z);
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index);

  static constexpr std::string_view kAlgorithm = "mt19937_64+splitmix64-derive";

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace qic
