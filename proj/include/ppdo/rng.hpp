#pragma once

#include <concepts>
#include <cstdint>
#include <random>

#include <gmpxx.h>

namespace ppdo {

/// Anything that can hand out raw 64-bit entropy words.
template <class R>
concept EntropySource = requires(R& r) {
  { r.next_u64() } -> std::convertible_to<std::uint64_t>;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Deterministic entropy source. A run owns several independent streams
/// derived from one master seed so that, e.g., the penalty-schedule draws of a
/// plaintext run and its encrypted twin are identical while key generation
/// consumes its own stream.
class Rng {
 public:
  enum class Stream : std::uint64_t {
    kSchedule = 1,  // b caps, b sequences, gamma draws
    kCrypto = 2,    // primes and encryption nonces
    kInit = 3,      // initial states, when randomized
    kMisc = 4,
  };

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng derive(std::uint64_t master_seed, Stream stream, std::uint64_t id) {
    std::uint64_t s = master_seed;
    std::uint64_t a = detail::splitmix64(s);
    s ^= static_cast<std::uint64_t>(stream) * 0xda942042e4dd58b5ULL;
    std::uint64_t b = detail::splitmix64(s);
    s ^= id * 0xca01f9dd45dd57ULL + 0x9e3779b97f4a7c15ULL;
    std::uint64_t c = detail::splitmix64(s);
    return Rng(a ^ (b + 0x165667b19e3779f9ULL) ^ (c << 1));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1): 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform in (0, hi]: never returns zero.
  double uniform_positive(double hi) { return hi * (1.0 - uniform01()); }

 private:
  std::mt19937_64 engine_;
};

/// Uniform nonnegative integer with exactly `bits` bits (top bit set).
template <EntropySource R>
mpz_class random_mpz_bits(R& rng, unsigned bits) {
  mpz_class out = 0;
  unsigned produced = 0;
  while (produced < bits) {
    out <<= 64;
    out += mpz_class{static_cast<unsigned long>(rng.next_u64())};
    produced += 64;
  }
  out >>= (produced - bits);              // keep exactly `bits` low bits
  mpz_setbit(out.get_mpz_t(), bits - 1);  // force the advertised width
  return out;
}

/// Uniform integer in [0, bound) by rejection sampling.
template <EntropySource R>
mpz_class random_mpz_below(R& rng, const mpz_class& bound) {
  const std::size_t bits = mpz_sizeinbase(bound.get_mpz_t(), 2);
  const unsigned words = static_cast<unsigned>((bits + 63) / 64);
  while (true) {
    mpz_class cand = 0;
    for (unsigned w = 0; w < words; ++w) {
      cand <<= 64;
      cand += mpz_class{static_cast<unsigned long>(rng.next_u64())};
    }
    mpz_tdiv_r_2exp(cand.get_mpz_t(), cand.get_mpz_t(), bits);
    if (cand < bound) return cand;
  }
}

}  // namespace ppdo
