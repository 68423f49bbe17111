#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "ppdo/errors.hpp"
#include "ppdo/messages.hpp"

namespace ppdo::transport {

using protocol::EncryptedState;
using protocol::KeyAnnounce;
using protocol::ProtocolMessage;
using protocol::WeightedDiffReply;

// ---------------------------------------------------------------------------
// Frame format (bit-exact)
//
//   magic   4 bytes  "PPDO"
//   version u8       1
//   type    u8       1 = KeyAnnounce, 2 = EncryptedState, 3 = WeightedDiffReply
//   sender  u16      big-endian
//   recver  u16      big-endian
//   iter    u32      big-endian
//   length  u32      big-endian payload byte count
//   payload
//
// Payload encodings: big integers as u32 big-endian byte count followed by
// big-endian magnitude bytes; ciphertext vectors as u16 element count then
// the elements.
// ---------------------------------------------------------------------------

inline constexpr char kMagic[4] = {'P', 'P', 'D', 'O'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 18;

using Bytes = std::vector<std::uint8_t>;

namespace detail {

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(data_[at_] << 8 | data_[at_ + 1]);
    at_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v = (v << 8) | data_[at_ + k];
    at_ += 4;
    return v;
  }

  const std::uint8_t* raw(std::size_t count) {
    need(count);
    const std::uint8_t* p = data_ + at_;
    at_ += count;
    return p;
  }

  bool exhausted() const { return at_ == size_; }

 private:
  void need(std::size_t count) const {
    if (at_ + count > size_) throw SerializationError("payload truncated");
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t at_ = 0;
};

}  // namespace detail

/// Big integer wire form: u32 byte count, then big-endian magnitude. All
/// Paillier values are nonnegative, so there is no sign byte.
inline void append_bigint(Bytes& out, const mpz_class& v) {
  if (v < 0) throw SerializationError("wire integers must be nonnegative");
  const std::size_t count = v == 0 ? 0 : (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
  detail::put_u32(out, static_cast<std::uint32_t>(count));
  if (count == 0) return;
  const std::size_t start = out.size();
  out.resize(start + count);
  std::size_t written = 0;
  mpz_export(out.data() + start, &written, 1, 1, 1, 0, v.get_mpz_t());
  if (written != count) throw SerializationError("big integer export size mismatch");
}

inline mpz_class read_bigint(detail::Reader& in) {
  const std::uint32_t count = in.u32();
  if (count == 0) return 0;
  mpz_class v;
  mpz_import(v.get_mpz_t(), count, 1, 1, 1, 0, in.raw(count));
  return v;
}

inline void append_bigint_vector(Bytes& out, const std::vector<mpz_class>& vs) {
  if (vs.size() > 0xffff) throw SerializationError("vector exceeds u16 element count");
  detail::put_u16(out, static_cast<std::uint16_t>(vs.size()));
  for (const auto& v : vs) append_bigint(out, v);
}

inline std::vector<mpz_class> read_bigint_vector(detail::Reader& in) {
  const std::uint16_t count = in.u16();
  std::vector<mpz_class> vs;
  vs.reserve(count);
  for (std::uint16_t k = 0; k < count; ++k) vs.push_back(read_bigint(in));
  return vs;
}

inline std::uint8_t message_type(const ProtocolMessage& msg) {
  if (std::holds_alternative<KeyAnnounce>(msg.body)) return 1;
  if (std::holds_alternative<EncryptedState>(msg.body)) return 2;
  return 3;
}

/// Deterministic byte-for-byte serialization of a protocol message.
inline Bytes serialize(const ProtocolMessage& msg) {
  Bytes payload;
  if (const auto* ka = std::get_if<KeyAnnounce>(&msg.body)) {
    append_bigint(payload, ka->n);
  } else if (const auto* es = std::get_if<EncryptedState>(&msg.body)) {
    append_bigint_vector(payload, es->ciphertexts);
  } else {
    append_bigint_vector(payload, std::get<WeightedDiffReply>(msg.body).ciphertexts);
  }
  if (payload.size() > 0xffffffffull) throw SerializationError("payload exceeds frame limit");

  Bytes frame;
  frame.reserve(kHeaderSize + payload.size());
  frame.insert(frame.end(), kMagic, kMagic + 4);
  frame.push_back(kVersion);
  frame.push_back(message_type(msg));
  detail::put_u16(frame, msg.sender);
  detail::put_u16(frame, msg.receiver);
  detail::put_u32(frame, msg.iteration);
  detail::put_u32(frame, static_cast<std::uint32_t>(payload.size()));
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

/// Total parse: any byte string either yields a message or a SerializationError.
inline ProtocolMessage deserialize(const Bytes& frame) {
  if (frame.size() < kHeaderSize) throw SerializationError("frame shorter than header");
  if (std::memcmp(frame.data(), kMagic, 4) != 0) throw SerializationError("bad magic");
  if (frame[4] != kVersion) throw SerializationError("unsupported version");
  const std::uint8_t type = frame[5];
  detail::Reader header(frame.data() + 6, kHeaderSize - 6);
  ProtocolMessage msg;
  msg.sender = header.u16();
  msg.receiver = header.u16();
  msg.iteration = header.u32();
  const std::uint32_t length = header.u32();
  if (frame.size() != kHeaderSize + length) throw SerializationError("payload length mismatch");

  detail::Reader payload(frame.data() + kHeaderSize, length);
  switch (type) {
    case 1:
      msg.body = KeyAnnounce{read_bigint(payload)};
      break;
    case 2:
      msg.body = EncryptedState{read_bigint_vector(payload)};
      break;
    case 3:
      msg.body = WeightedDiffReply{read_bigint_vector(payload)};
      break;
    default:
      throw SerializationError("unknown message type " + std::to_string(type));
  }
  if (!payload.exhausted()) throw SerializationError("trailing bytes after payload");
  return msg;
}

inline std::optional<ProtocolMessage> try_deserialize(const Bytes& frame, std::string* error) {
  try {
    return deserialize(frame);
  } catch (const SerializationError& e) {
    if (error) *error = e.what();
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

struct Endpoint {
  int agent = 0;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // tcp only; 0 means "base + agent id"
};

inline constexpr std::uint16_t kDefaultPortBase = 7100;

/// Message delivery abstraction. send() routes a message towards its
/// receiver; receive() hands the receiver its next pending message.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const ProtocolMessage& msg) = 0;
  virtual ProtocolMessage receive(int receiver) = 0;

  void enable_capture() { capture_ = std::make_unique<std::vector<Bytes>>(); }
  const std::vector<Bytes>& captured() const {
    if (!capture_) throw TransportError("capture was not enabled");
    return *capture_;
  }

 protected:
  void maybe_capture(const Bytes& frame) {
    if (capture_) capture_->push_back(frame);
  }

  std::unique_ptr<std::vector<Bytes>> capture_;
};

/// Deterministic in-process mailbox: FIFO per receiver, no loss, no
/// reordering of a sender's frames. Messages cross the boundary as encoded
/// frames so the simulated path exercises the same wire format as TCP.
class SimTransport : public Transport {
 public:
  void send(const ProtocolMessage& msg) override {
    Bytes frame = serialize(msg);
    std::lock_guard lock(mutex_);
    maybe_capture(frame);
    inboxes_[msg.receiver].push_back(std::move(frame));
  }

  ProtocolMessage receive(int receiver) override {
    std::lock_guard lock(mutex_);
    auto& inbox = inboxes_[receiver];
    if (inbox.empty()) {
      throw ProtocolError("agent " + std::to_string(receiver) +
                          " polled an empty mailbox: protocol round out of order");
    }
    Bytes frame = std::move(inbox.front());
    inbox.pop_front();
    return deserialize(frame);
  }

  std::optional<ProtocolMessage> poll(int receiver) {
    std::lock_guard lock(mutex_);
    auto& inbox = inboxes_[receiver];
    if (inbox.empty()) return std::nullopt;
    Bytes frame = std::move(inbox.front());
    inbox.pop_front();
    return deserialize(frame);
  }

  std::size_t pending(int receiver) {
    std::lock_guard lock(mutex_);
    return inboxes_[receiver].size();
  }

 private:
  std::mutex mutex_;
  std::map<int, std::deque<Bytes>> inboxes_;
};

namespace detail {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close_fd();
      fd_ = other.fd_;
      other.fd_ = -1;
    }
    return *this;
  }
  ~Socket() { close_fd(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void write_all(const std::uint8_t* data, std::size_t size) const {
    std::size_t sent = 0;
    while (sent < size) {
      ssize_t n = ::send(fd_, data + sent, size - sent, MSG_NOSIGNAL);
      if (n <= 0) throw TransportError("tcp send failed");
      sent += static_cast<std::size_t>(n);
    }
  }

  bool read_all(std::uint8_t* data, std::size_t size) const {
    std::size_t got = 0;
    while (got < size) {
      ssize_t n = ::recv(fd_, data + got, size - got, 0);
      if (n == 0) return false;  // peer closed
      if (n < 0) throw TransportError("tcp recv failed");
      got += static_cast<std::size_t>(n);
    }
    return true;
  }

 private:
  void close_fd() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  int fd_ = -1;
};

inline Bytes read_frame(const Socket& sock) {
  Bytes frame(kHeaderSize);
  if (!sock.read_all(frame.data(), kHeaderSize)) return {};
  std::uint32_t length = 0;
  for (int k = 0; k < 4; ++k) length = (length << 8) | frame[kHeaderSize - 4 + k];
  frame.resize(kHeaderSize + length);
  if (length > 0 && !sock.read_all(frame.data() + kHeaderSize, length)) return {};
  return frame;
}

}  // namespace detail

/// Framed TCP delivery: one persistent connection per directed neighbor
/// pair, a reader thread per inbound connection, per-connection serial
/// delivery. Sends retry up to three times with exponential backoff before
/// the round is declared failed.
class TcpTransport : public Transport {
 public:
  /// `self` must appear in `endpoints`. Listening starts immediately;
  /// outbound connections are opened lazily on first send.
  TcpTransport(int self, std::vector<Endpoint> endpoints) : self_(self) {
    for (auto& ep : endpoints) {
      if (ep.port == 0) ep.port = static_cast<std::uint16_t>(kDefaultPortBase + ep.agent);
      endpoints_[ep.agent] = ep;
    }
    if (!endpoints_.contains(self_)) throw TransportError("self endpoint not registered");
    start_listener(endpoints_.at(self_).port);
  }

  ~TcpTransport() override {
    shutting_down_ = true;
    // shutdown(), not close(): closing an fd does not wake a thread blocked
    // in accept()/recv() on it.
    if (listener_.valid()) ::shutdown(listener_.fd(), SHUT_RDWR);
    if (accept_thread_.joinable()) accept_thread_.join();
    listener_ = detail::Socket();
    {
      std::lock_guard lock(mutex_);
      readers_running_ = false;
      for (int fd : inbound_fds_) ::shutdown(fd, SHUT_RDWR);
      ready_.notify_all();
    }
    for (auto& t : reader_threads_) {
      if (t.joinable()) t.join();
    }
  }

  std::uint16_t listen_port() const { return listen_port_; }

  void send(const ProtocolMessage& msg) override {
    auto it = endpoints_.find(msg.receiver);
    if (it == endpoints_.end()) {
      throw TransportError("unregistered endpoint " + std::to_string(msg.receiver));
    }
    Bytes frame = serialize(msg);
    {
      std::lock_guard lock(mutex_);
      maybe_capture(frame);
    }
    int backoff_ms = 10;
    for (int attempt = 0; attempt < 3; ++attempt) {
      try {
        detail::Socket& sock = outbound(msg.receiver);
        sock.write_all(frame.data(), frame.size());
        return;
      } catch (const TransportError&) {
        std::lock_guard lock(mutex_);
        outbound_.erase(msg.receiver);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 4;
    }
    throw TransportError("delivery to agent " + std::to_string(msg.receiver) +
                         " failed after 3 attempts");
  }

  ProtocolMessage receive(int receiver) override {
    if (receiver != self_) throw TransportError("tcp transport only receives for its own agent");
    std::unique_lock lock(mutex_);
    ready_.wait(lock, [&] { return !queue_.empty() || !readers_running_; });
    if (queue_.empty()) throw TransportError("transport shut down while receiving");
    Bytes frame = std::move(queue_.front());
    queue_.pop_front();
    return deserialize(frame);
  }

 private:
  void start_listener(std::uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("cannot create listen socket");
    listener_ = detail::Socket(fd);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      throw TransportError("cannot bind port " + std::to_string(port));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    listen_port_ = ntohs(addr.sin_port);
    if (::listen(fd, 64) != 0) throw TransportError("cannot listen");
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  void accept_loop() {
    while (!shutting_down_) {
      int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) return;
      std::lock_guard lock(mutex_);
      inbound_fds_.push_back(fd);
      reader_threads_.emplace_back([this, fd] { reader_loop(fd); });
    }
  }

  void reader_loop(int fd) {
    detail::Socket sock(fd);  // reader owns the connection
    while (true) {
      Bytes frame;
      try {
        frame = detail::read_frame(sock);
      } catch (const TransportError&) {
        frame.clear();
      }
      std::lock_guard lock(mutex_);
      if (frame.empty() || !readers_running_) return;
      queue_.push_back(std::move(frame));
      ready_.notify_all();
    }
  }

  detail::Socket& outbound(int agent) {
    std::lock_guard lock(mutex_);
    auto it = outbound_.find(agent);
    if (it != outbound_.end() && it->second.valid()) return it->second;
    const Endpoint& ep = endpoints_.at(agent);
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("cannot create socket");
    detail::Socket sock(fd);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) {
      throw TransportError("bad address " + ep.host);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      throw TransportError("cannot connect to agent " + std::to_string(agent));
    }
    return outbound_[agent] = std::move(sock);
  }

  int self_;
  std::map<int, Endpoint> endpoints_;
  detail::Socket listener_;
  std::uint16_t listen_port_ = 0;
  std::thread accept_thread_;
  std::vector<std::thread> reader_threads_;
  std::vector<int> inbound_fds_;  // owned by reader threads; kept for shutdown
  std::map<int, detail::Socket> outbound_;
  std::deque<Bytes> queue_;
  std::mutex mutex_;
  std::condition_variable ready_;
  bool readers_running_ = true;
  std::atomic<bool> shutting_down_ = false;
};

}  // namespace ppdo::transport
