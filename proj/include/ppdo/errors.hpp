#pragma once

#include <stdexcept>
#include <string>

namespace ppdo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid argument to a crypto/codec/solver operation (value out of domain).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Bad run/problem configuration. Carries every violation found, not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

/// Key generation could not complete within its retry budget.
class KeyGenError : public Error {
 public:
  using Error::Error;
};

/// Fixed-point encoding would overflow the signed slot range.
class EncodeError : public Error {
 public:
  using Error::Error;
};

/// A ciphertext failed validation under the given key.
class MalformedCiphertextError : public Error {
 public:
  using Error::Error;
};

/// Messages arrived out of the order the protocol requires, or not at all.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Iterates exceeded the divergence bound, or an inner solver gave up.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Wire-format violation (frame too large, unknown type, truncated payload).
class SerializationError : public Error {
 public:
  using Error::Error;
};

/// Transport-level failure (unregistered endpoint, connection loss).
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace ppdo
