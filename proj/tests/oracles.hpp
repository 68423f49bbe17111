#pragma once

// Independent reference implementations used to compute expected values in
// tests. These deliberately avoid the library's own code paths (and GMP):
// plain integer arithmetic only.

#include <cstdint>
#include <stdexcept>

namespace oracles {

/// Square-and-multiply modular exponentiation on 64-bit values.
inline std::uint64_t modpow(std::uint64_t base, std::uint64_t exp, std::uint64_t mod) {
  if (mod == 0) throw std::invalid_argument("mod 0");
  unsigned __int128 result = 1;
  unsigned __int128 b = base % mod;
  while (exp > 0) {
    if (exp & 1) result = result * b % mod;
    b = b * b % mod;
    exp >>= 1;
  }
  return static_cast<std::uint64_t>(result);
}

/// Extended Euclid: returns gcd(a, b) and Bezout coefficients.
inline std::int64_t extended_gcd(std::int64_t a, std::int64_t b, std::int64_t& x,
                                 std::int64_t& y) {
  if (b == 0) {
    x = 1;
    y = 0;
    return a;
  }
  std::int64_t x1 = 0, y1 = 0;
  std::int64_t g = extended_gcd(b, a % b, x1, y1);
  x = y1;
  y = x1 - (a / b) * y1;
  return g;
}

/// a^{-1} mod m via extended Euclid.
inline std::int64_t inverse_mod(std::int64_t a, std::int64_t m) {
  std::int64_t x = 0, y = 0;
  if (extended_gcd(a, m, x, y) != 1) throw std::invalid_argument("not invertible");
  return ((x % m) + m) % m;
}

/// 64-bit two's-complement representation of a (possibly negative) integer.
inline std::uint64_t twos_complement_64(std::int64_t value) {
  if (value >= 0) return static_cast<std::uint64_t>(value);
  return ~static_cast<std::uint64_t>(-value) + 1;
}

}  // namespace oracles
