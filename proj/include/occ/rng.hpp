#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace occ {

// Derives the seed of a named sub-stream (data, init, shuffle, augment, ...)
// from a root seed. Streams with different names are decorrelated.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

// Deterministic generator. All distribution transforms are implemented here
// (not via std::*_distribution, which is implementation-defined), so the same
// seed yields the same values on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal, Box-Muller
  double normal();

  // uniform integer in [0, n)
  std::size_t uniform_below(std::size_t n);

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.empty()) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = uniform_below(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace occ
