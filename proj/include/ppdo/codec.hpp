#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

#include <gmpxx.h>

#include "ppdo/errors.hpp"

namespace ppdo::codec {

/// Fixed-point parameters: reals are scaled by n_max, rounded, and stored as
/// word_bits-wide two's-complement slots. word_bits must leave enough
/// headroom below the plaintext space so a weighted difference never wraps
/// mod n before the slot mask is applied; protocol setup validates that
/// against the actual key size.
struct CodecConfig {
  std::uint64_t n_max = 1'000'000;
  unsigned word_bits = 64;

  void validate() const {
    if (n_max < 1) throw ConfigError("n_max must be at least 1");
    if (word_bits < 8 || word_bits > 64) {
      throw ConfigError("word_bits must be in [8, 64]");
    }
  }

  std::uint64_t slot_mask() const {
    return word_bits == 64 ? ~0ull : ((1ull << word_bits) - 1);
  }
};

/// One unsigned slot; negative values live in two's-complement form.
struct EncodedValue {
  std::uint64_t slot = 0;

  friend bool operator==(const EncodedValue& a, const EncodedValue& b) {
    return a.slot == b.slot;
  }
};

/// Round to nearest, ties away from zero, then wrap into the slot width.
/// Refuses to encode anything whose scaled magnitude leaves the signed range.
inline EncodedValue encode_real(const CodecConfig& cfg, double v) {
  if (!std::isfinite(v)) throw EncodeError("cannot encode a non-finite value");
  const long double scaled = static_cast<long double>(v) * static_cast<long double>(cfg.n_max);
  const long double limit = std::ldexp(1.0L, static_cast<int>(cfg.word_bits) - 1);
  if (!(scaled < limit - 0.5L && scaled > -limit + 0.5L)) {
    throw EncodeError("scaled value overflows the signed slot range");
  }
  const long long rounded = std::llroundl(scaled);
  return EncodedValue{static_cast<std::uint64_t>(rounded) & cfg.slot_mask()};
}

/// Two's-complement interpretation of a slot at the configured width.
inline std::int64_t signed_value(const CodecConfig& cfg, EncodedValue e) {
  std::uint64_t s = e.slot & cfg.slot_mask();
  if (cfg.word_bits < 64 && (s >> (cfg.word_bits - 1)) != 0) {
    s |= ~cfg.slot_mask();  // sign-extend
  }
  return std::bit_cast<std::int64_t>(s);
}

/// Inverse of encode_real up to the rounding step: |decode(encode(v)) - v|
/// is at most 1/(2*n_max).
inline double decode_real(const CodecConfig& cfg, EncodedValue e) {
  return static_cast<double>(signed_value(cfg, e)) / static_cast<double>(cfg.n_max);
}

/// Discards the bits above the slot width of a decrypted plaintext. This is
/// what makes the two's-complement trick survive homomorphic arithmetic: the
/// multiples of 2^word_bits that signed operands pick up vanish here.
inline EncodedValue mask_to_word(const mpz_class& raw_plaintext, const CodecConfig& cfg) {
  if (raw_plaintext < 0) throw DomainError("decrypted plaintext cannot be negative");
  mpz_class low;
  mpz_tdiv_r_2exp(low.get_mpz_t(), raw_plaintext.get_mpz_t(), cfg.word_bits);
  std::uint64_t slot = 0;
  // Export at most 64 bits, little-endian word order.
  mpz_export(&slot, nullptr, -1, sizeof(slot), 0, 0, low.get_mpz_t());
  return EncodedValue{slot & cfg.slot_mask()};
}

}  // namespace ppdo::codec
