#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace tsdn {

// Seeded random stream. Distributions are implemented here rather than via
// <random> distributions so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Independent stream keyed by (seed, purpose); order of derivation never matters.
  static Rng derive(std::uint64_t seed, std::string_view purpose);
  static Rng derive(std::uint64_t seed, std::string_view purpose, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double log_uniform(double lo, double hi);
  double normal();
  std::size_t below(std::size_t n);  // [0, n)
  bool coin() { return (engine_() >> 63) != 0; }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) std::swap(first[i - 1], first[below(i)]);
  }

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view s);
// Hex digest (FNV-1a 64) used to fingerprint RNG states and files.
std::string digest_hex(std::string_view bytes);

}  // namespace tsdn
