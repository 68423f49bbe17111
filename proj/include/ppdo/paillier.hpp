#pragma once

#include <cstdint>
#include <functional>
#include <utility>

#include <gmpxx.h>

#include "ppdo/errors.hpp"
#include "ppdo/rng.hpp"

namespace ppdo::paillier {

/// Public half of a key pair: modulus n = p*q and generator g = n + 1.
/// n_squared is cached because every ciphertext operation reduces mod n^2.
struct PublicKey {
  mpz_class n;
  mpz_class g;
  mpz_class n_squared;

  std::size_t bit_length() const { return mpz_sizeinbase(n.get_mpz_t(), 2); }

  friend bool operator==(const PublicKey& a, const PublicKey& b) { return a.n == b.n; }
};

/// Private half: lambda = (p-1)(q-1) and mu = lambda^{-1} mod n.
/// The primes themselves are discarded at key generation.
struct PrivateKey {
  mpz_class lambda;
  mpz_class mu;
};

struct KeyPair {
  PublicKey pk;
  PrivateKey sk;
};

/// An element of Z*_{n^2}. Carries no key fingerprint: pairing ciphertexts
/// with the right key is the caller's responsibility.
struct Ciphertext {
  mpz_class value;

  friend bool operator==(const Ciphertext& a, const Ciphertext& b) {
    return a.value == b.value;
  }
};

namespace audit {

/// Optional observer invoked on every decryption. Tests install it to check
/// that no participant other than the key owner ever decrypts.
inline std::function<void(const PublicKey&)>& decrypt_observer() {
  static std::function<void(const PublicKey&)> observer;
  return observer;
}

}  // namespace audit

/// Miller-Rabin with `rounds` random bases. The error probability is at most
/// 4^-rounds; 64 rounds is far below any practical failure rate.
template <EntropySource R>
bool is_probable_prime(const mpz_class& n, R& rng, int rounds = 64) {
  if (n < 2) return false;
  for (unsigned long small : {2ul, 3ul, 5ul, 7ul, 11ul, 13ul, 17ul, 19ul, 23ul}) {
    if (n == small) return true;
    if (mpz_divisible_ui_p(n.get_mpz_t(), small)) return false;
  }

  // n - 1 = d * 2^s with d odd
  mpz_class n_minus_1 = n - 1;
  mpz_class d = n_minus_1;
  unsigned long s = mpz_scan1(d.get_mpz_t(), 0);
  d >>= s;

  mpz_class base, x;
  for (int round = 0; round < rounds; ++round) {
    base = 2 + random_mpz_below(rng, mpz_class(n - 3));  // [2, n-2]
    mpz_powm(x.get_mpz_t(), base.get_mpz_t(), d.get_mpz_t(), n.get_mpz_t());
    if (x == 1 || x == n_minus_1) continue;
    bool witness = true;
    for (unsigned long i = 0; i + 1 < s; ++i) {
      mpz_powm_ui(x.get_mpz_t(), x.get_mpz_t(), 2, n.get_mpz_t());
      if (x == n_minus_1) {
        witness = false;
        break;
      }
    }
    if (witness) return false;
  }
  return true;
}

namespace detail {

template <EntropySource R>
mpz_class random_prime(R& rng, unsigned bits, int max_attempts) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    mpz_class cand = random_mpz_bits(rng, bits);
    // Top two bits set so the product of two such primes has exactly 2*bits
    // bits; low bit set so the candidate is odd.
    mpz_setbit(cand.get_mpz_t(), bits - 1);
    if (bits >= 2) mpz_setbit(cand.get_mpz_t(), bits - 2);
    mpz_setbit(cand.get_mpz_t(), 0);
    if (is_probable_prime(cand, rng)) return cand;
  }
  throw KeyGenError("prime search exhausted its retry budget");
}

}  // namespace detail

/// Builds a key pair from explicit primes. Used by tests and toy examples;
/// production key material comes from generate_keys.
inline KeyPair keypair_from_primes(const mpz_class& p, const mpz_class& q) {
  if (p == q) throw KeyGenError("p and q must differ");
  KeyPair kp;
  kp.pk.n = p * q;
  kp.pk.g = kp.pk.n + 1;
  kp.pk.n_squared = kp.pk.n * kp.pk.n;
  kp.sk.lambda = (p - 1) * (q - 1);
  mpz_class mu;
  if (mpz_invert(mu.get_mpz_t(), kp.sk.lambda.get_mpz_t(), kp.pk.n.get_mpz_t()) == 0) {
    throw KeyGenError("phi(n) is not invertible mod n");
  }
  kp.sk.mu = mu;
  return kp;
}

/// Key generation: two equal-bit-length primes, n = pq, g = n + 1,
/// lambda = phi(n), mu = phi(n)^{-1} mod n. Retries with fresh primes until
/// gcd(phi(n), n) = 1, which makes mu exist.
template <EntropySource R>
KeyPair generate_keys(unsigned bit_length, R& rng) {
  if (bit_length < 16 || bit_length % 2 != 0) {
    throw DomainError("key bit length must be even and at least 16");
  }
  const unsigned prime_bits = bit_length / 2;
  const int max_prime_attempts = 64 * static_cast<int>(bit_length);
  for (int attempt = 0; attempt < 32; ++attempt) {
    mpz_class p = detail::random_prime(rng, prime_bits, max_prime_attempts);
    mpz_class q = detail::random_prime(rng, prime_bits, max_prime_attempts);
    if (p == q) continue;
    mpz_class phi = (p - 1) * (q - 1);
    mpz_class n = p * q;
    mpz_class d;
    mpz_gcd(d.get_mpz_t(), phi.get_mpz_t(), n.get_mpz_t());
    if (d != 1) continue;
    return keypair_from_primes(p, q);
  }
  throw KeyGenError("could not find a usable prime pair");
}

namespace testing {

/// Deterministic encryption with an injected nonce. Test-only: the production
/// path always draws fresh randomness.
inline Ciphertext encrypt_with_nonce(const PublicKey& pk, const mpz_class& m,
                                     const mpz_class& r) {
  if (m < 0 || m >= pk.n) throw DomainError("plaintext outside Z_n");
  mpz_class d;
  mpz_gcd(d.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
  if (r <= 0 || r >= pk.n || d != 1) throw DomainError("nonce outside Z*_n");
  // g = n + 1, so g^m mod n^2 reduces to 1 + m*n (binomial expansion).
  mpz_class gm = (1 + m * pk.n) % pk.n_squared;
  mpz_class rn;
  mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(), pk.n_squared.get_mpz_t());
  return Ciphertext{(gm * rn) % pk.n_squared};
}

}  // namespace testing

/// c = g^m * r^n mod n^2 with r uniform in Z*_n.
template <EntropySource R>
Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, R& rng) {
  if (m < 0 || m >= pk.n) throw DomainError("plaintext outside Z_n");
  mpz_class r, d;
  do {
    r = 1 + random_mpz_below(rng, mpz_class(pk.n - 1));  // [1, n-1]
    mpz_gcd(d.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
  } while (d != 1);
  return testing::encrypt_with_nonce(pk, m, r);
}

/// m = L(c^lambda mod n^2) * mu mod n, where L(u) = (u - 1) / n.
inline mpz_class decrypt(const PrivateKey& sk, const PublicKey& pk, const Ciphertext& c) {
  if (c.value <= 0 || c.value >= pk.n_squared) {
    throw MalformedCiphertextError("ciphertext outside Z_{n^2}");
  }
  mpz_class d;
  mpz_gcd(d.get_mpz_t(), c.value.get_mpz_t(), pk.n_squared.get_mpz_t());
  if (d != 1) throw MalformedCiphertextError("ciphertext not a unit mod n^2");
  if (auto& observer = audit::decrypt_observer()) observer(pk);

  mpz_class u;
  mpz_powm(u.get_mpz_t(), c.value.get_mpz_t(), sk.lambda.get_mpz_t(),
           pk.n_squared.get_mpz_t());
  mpz_class l = (u - 1) / pk.n;
  return (l * sk.mu) % pk.n;
}

/// E(m1) * E(m2) = E(m1 + m2 mod n).
inline Ciphertext hom_add(const PublicKey& pk, const Ciphertext& c1, const Ciphertext& c2) {
  return Ciphertext{(c1.value * c2.value) % pk.n_squared};
}

/// E(m)^k = E(k*m mod n). k = 0 degenerates to E(0) via c^0 = 1.
inline Ciphertext hom_scale(const PublicKey& pk, const Ciphertext& c, const mpz_class& k) {
  if (k < 0 || k >= pk.n) throw DomainError("scale factor outside [0, n)");
  mpz_class out;
  mpz_powm(out.get_mpz_t(), c.value.get_mpz_t(), k.get_mpz_t(), pk.n_squared.get_mpz_t());
  return Ciphertext{out};
}

inline Ciphertext hom_scale(const PublicKey& pk, const Ciphertext& c, std::uint64_t k) {
  return hom_scale(pk, c, mpz_class{static_cast<unsigned long>(k)});
}

}  // namespace ppdo::paillier
