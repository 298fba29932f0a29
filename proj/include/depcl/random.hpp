#ifndef DEPCL_RANDOM_HPP
#define DEPCL_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

namespace depcl {

/// SplitMix64 finalizer. Bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a path of keys. Each key
/// position is mixed separately so that (a, b) and (b, a) give different
/// children.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

/// Stream purposes. Keeping them distinct guarantees that evaluation draws
/// never reuse training randomness.
enum class Stream : std::uint64_t {
  input = 1,
  noise = 2,
  memory = 3,
  evaluation = 4,
  probe = 5,
  theta_star = 6,
  trial = 7,
  validation = 8,
  solver = 9,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }  // [0, 1)
  /// Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  bool coin() { return (engine_() >> 63) != 0; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Counter-based stream: the generator for (seed, purpose, a, b) does not
/// depend on how many other streams were drawn before it.
inline Rng make_stream(std::uint64_t seed, Stream purpose, std::uint64_t a = 0,
                       std::uint64_t b = 0) {
  return Rng(derive_seed(seed, {static_cast<std::uint64_t>(purpose), a, b}));
}

}  // namespace depcl

#endif  // DEPCL_RANDOM_HPP
