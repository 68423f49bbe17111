#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <string>

#include <ppdo/paillier.hpp>
#include <ppdo/rng.hpp>

#include "oracles.hpp"

using namespace ppdo;
using paillier::Ciphertext;
using paillier::KeyPair;

namespace {

KeyPair toy_key() { return paillier::keypair_from_primes(5, 7); }

/// Entropy source that repeats one word forever; key generation can never
/// find two distinct primes from it.
struct StuckRng {
  std::uint64_t next_u64() { return 0x5a5a5a5a5a5a5a5aULL; }
};

}  // namespace

TEST_CASE("toy key from forced primes p=5, q=7") {
  KeyPair kp = toy_key();
  CHECK(kp.pk.n == 35);
  CHECK(kp.pk.g == 36);
  CHECK(kp.pk.n_squared == 1225);
  CHECK(kp.sk.lambda == 24);
  // Independent extended-Euclid oracle for the modular inverse.
  REQUIRE(oracles::inverse_mod(24, 35) == 19);
  CHECK(kp.sk.mu == 19);
}

TEST_CASE("generated keys satisfy the inverse law and the bit-length contract") {
  for (unsigned bits : {64u, 128u, 256u}) {
    Rng rng(1000 + bits);
    KeyPair kp = paillier::generate_keys(bits, rng);
    CHECK((kp.sk.lambda * kp.sk.mu) % kp.pk.n == 1);
    CHECK(kp.pk.bit_length() == bits);
    CHECK(kp.pk.g == kp.pk.n + 1);
  }
}

TEST_CASE("key generation rejects bad bit lengths") {
  Rng rng(3);
  CHECK_THROWS_AS(paillier::generate_keys(8, rng), DomainError);
  CHECK_THROWS_AS(paillier::generate_keys(31, rng), DomainError);
}

TEST_CASE("key generation fails after bounded retries on a stuck entropy source") {
  StuckRng rng;
  CHECK_THROWS_AS(paillier::generate_keys(16, rng), KeyGenError);
}

TEST_CASE("encryption matches the modular-exponentiation oracle") {
  KeyPair kp = toy_key();

  SECTION("m=0 with r=1 gives the unit ciphertext") {
    CHECK(paillier::testing::encrypt_with_nonce(kp.pk, 0, 1).value == 1);
  }

  SECTION("m=2 with r=3: g^m * r^n mod n^2") {
    // Oracle: 36^2 * 3^35 mod 1225.
    const std::uint64_t expected =
        oracles::modpow(36, 2, 1225) * oracles::modpow(3, 35, 1225) % 1225;
    REQUIRE(expected == 222);
    CHECK(paillier::testing::encrypt_with_nonce(kp.pk, 2, 3).value == 222);
  }

  SECTION("out-of-range plaintext is refused") {
    Rng rng(9);
    CHECK_THROWS_AS(paillier::encrypt(kp.pk, 35, rng), DomainError);
    CHECK_THROWS_AS(paillier::encrypt(kp.pk, -1, rng), DomainError);
  }
}

TEST_CASE("decryption inverts the toy examples") {
  KeyPair kp = toy_key();
  CHECK(paillier::decrypt(kp.sk, kp.pk, Ciphertext{222}) == 2);
  CHECK(paillier::decrypt(kp.sk, kp.pk, Ciphertext{1}) == 0);
}

TEST_CASE("malformed ciphertexts are rejected") {
  KeyPair kp = toy_key();
  CHECK_THROWS_AS(paillier::decrypt(kp.sk, kp.pk, Ciphertext{35}), MalformedCiphertextError);
  CHECK_THROWS_AS(paillier::decrypt(kp.sk, kp.pk, Ciphertext{0}), MalformedCiphertextError);
  CHECK_THROWS_AS(paillier::decrypt(kp.sk, kp.pk, Ciphertext{1225}), MalformedCiphertextError);
}

TEST_CASE("round trip over random plaintexts") {
  for (unsigned bits : {64u, 128u}) {
    Rng rng(7000 + bits);
    KeyPair kp = paillier::generate_keys(bits, rng);
    for (int k = 0; k < 200; ++k) {
      mpz_class m = random_mpz_below(rng, kp.pk.n);
      CHECK(paillier::decrypt(kp.sk, kp.pk, paillier::encrypt(kp.pk, m, rng)) == m);
    }
  }
}

TEST_CASE("homomorphic addition") {
  KeyPair kp = toy_key();
  Rng rng(11);
  auto enc = [&](unsigned long m) { return paillier::encrypt(kp.pk, m, rng); };
  auto dec = [&](const Ciphertext& c) { return paillier::decrypt(kp.sk, kp.pk, c); };

  CHECK(dec(paillier::hom_add(kp.pk, enc(2), enc(5))) == 7);
  CHECK(dec(paillier::hom_add(kp.pk, enc(13), enc(0))) == 13);
  // Wraparound: (30 + 10) mod 35.
  CHECK(dec(paillier::hom_add(kp.pk, enc(30), enc(10))) == 5);
}

TEST_CASE("homomorphic addition law over a real key") {
  Rng rng(21);
  KeyPair kp = paillier::generate_keys(128, rng);
  for (int k = 0; k < 100; ++k) {
    mpz_class m1 = random_mpz_below(rng, kp.pk.n);
    mpz_class m2 = random_mpz_below(rng, kp.pk.n);
    Ciphertext sum =
        paillier::hom_add(kp.pk, paillier::encrypt(kp.pk, m1, rng), paillier::encrypt(kp.pk, m2, rng));
    CHECK(paillier::decrypt(kp.sk, kp.pk, sum) == (m1 + m2) % kp.pk.n);
  }
}

TEST_CASE("homomorphic scaling") {
  KeyPair kp = toy_key();
  Rng rng(12);
  auto enc = [&](unsigned long m) { return paillier::encrypt(kp.pk, m, rng); };
  auto dec = [&](const Ciphertext& c) { return paillier::decrypt(kp.sk, kp.pk, c); };

  CHECK(dec(paillier::hom_scale(kp.pk, enc(2), std::uint64_t{3})) == 6);
  Ciphertext c9 = enc(9);
  CHECK(dec(paillier::hom_scale(kp.pk, c9, std::uint64_t{1})) == dec(c9));
  CHECK(dec(paillier::hom_scale(kp.pk, enc(0), std::uint64_t{23})) == 0);
  // k = 0 degenerates to an encryption of zero.
  CHECK(dec(paillier::hom_scale(kp.pk, c9, std::uint64_t{0})) == 0);
}

TEST_CASE("scalar law over a real key") {
  Rng rng(22);
  KeyPair kp = paillier::generate_keys(128, rng);
  for (int k = 0; k < 100; ++k) {
    mpz_class m = random_mpz_below(rng, kp.pk.n);
    mpz_class w = random_mpz_below(rng, kp.pk.n);
    Ciphertext scaled = paillier::hom_scale(kp.pk, paillier::encrypt(kp.pk, m, rng), w);
    CHECK(paillier::decrypt(kp.sk, kp.pk, scaled) == (m * w) % kp.pk.n);
  }
}

TEST_CASE("every produced ciphertext is a unit mod n^2") {
  Rng rng(31);
  KeyPair kp = paillier::generate_keys(64, rng);
  for (int k = 0; k < 50; ++k) {
    Ciphertext c = paillier::encrypt(kp.pk, random_mpz_below(rng, kp.pk.n), rng);
    CHECK(c.value > 0);
    CHECK(c.value < kp.pk.n_squared);
    mpz_class d;
    mpz_gcd(d.get_mpz_t(), c.value.get_mpz_t(), kp.pk.n_squared.get_mpz_t());
    CHECK(d == 1);
  }
}

TEST_CASE("fresh randomness: encrypting the same value never repeats") {
  Rng rng(41);
  KeyPair kp = paillier::generate_keys(128, rng);
  std::set<std::string> seen;
  for (int k = 0; k < 100; ++k) {
    Ciphertext c = paillier::encrypt(kp.pk, 12345, rng);
    CHECK(seen.insert(c.value.get_str(16)).second);
  }
}

TEST_CASE("miller-rabin agrees with small-number ground truth") {
  Rng rng(51);
  auto is_prime_slow = [](unsigned long n) {
    if (n < 2) return false;
    for (unsigned long d = 2; d * d <= n; ++d) {
      if (n % d == 0) return false;
    }
    return true;
  };
  for (unsigned long n = 2; n < 2000; ++n) {
    CHECK(paillier::is_probable_prime(mpz_class{n}, rng) == is_prime_slow(n));
  }
}
