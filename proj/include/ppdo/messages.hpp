#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <gmpxx.h>

namespace ppdo::protocol {

/// The three message kinds of the encrypted exchange. By construction no
/// variant has a field that could carry a private key or a b factor.
struct KeyAnnounce {
  mpz_class n;  // g = n + 1 is implied
};

/// Per-dimension ciphertexts of -x_i^t under the *sender's* key.
struct EncryptedState {
  std::vector<mpz_class> ciphertexts;
};

/// Per-dimension ciphertexts of b_{j->i}(x_j^t - x_i^t) under the
/// *receiver's* key.
struct WeightedDiffReply {
  std::vector<mpz_class> ciphertexts;
};

struct ProtocolMessage {
  std::uint16_t sender = 0;
  std::uint16_t receiver = 0;
  std::uint32_t iteration = 0;
  std::variant<KeyAnnounce, EncryptedState, WeightedDiffReply> body;
};

}  // namespace ppdo::protocol
