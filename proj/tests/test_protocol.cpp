#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <string>

#include <ppdo/adversary.hpp>
#include <ppdo/admm.hpp>
#include <ppdo/presets.hpp>
#include <ppdo/protocol.hpp>
#include <ppdo/transport.hpp>

using namespace ppdo;
using admm::RunConfig;
using problem::Graph;
using problem::Problem;
using protocol::ProtocolAgent;
using protocol::ProtocolMessage;

namespace {

Problem two_agent_problem() {
  return Problem::make_quadratic(Graph(2, {{1, 2}}, 1), {1.0, 1.0}, {2.0, 2.0},
                                 {presets::vec1(1.0), presets::vec1(3.0)});
}

/// Small keys keep the unit tests quick; headroom still holds.
RunConfig fast_crypto_config() {
  RunConfig cfg;
  cfg.key_bits = 128;
  return cfg;
}

struct DecryptCounter {
  int count = 0;
  mpz_class last_n;

  DecryptCounter() {
    paillier::audit::decrypt_observer() = [this](const paillier::PublicKey& pk) {
      ++count;
      last_n = pk.n;
    };
  }
  ~DecryptCounter() { paillier::audit::decrypt_observer() = nullptr; }
};

}  // namespace

TEST_CASE("announce carries one ciphertext per dimension") {
  auto preset = presets::comparison();  // D = 2
  RunConfig cfg = fast_crypto_config();
  ProtocolAgent agent(preset.problem, cfg, 1);
  auto msgs = agent.announce_and_encrypt(0);
  REQUIRE(msgs.size() == 3);  // agent 1 neighbors {2, 4, 6}
  for (const auto& m : msgs) {
    CHECK(std::get<protocol::EncryptedState>(m.body).ciphertexts.size() == 2);
  }
}

TEST_CASE("a zero state encrypts to slot zero under the owner's key") {
  Problem pb = two_agent_problem();
  RunConfig cfg = fast_crypto_config();
  ProtocolAgent agent(pb, cfg, 1);  // x0 defaults to zero
  auto msgs = agent.announce_and_encrypt(0);
  const auto& ct = std::get<protocol::EncryptedState>(msgs.at(0).body).ciphertexts.at(0);
  CHECK(paillier::decrypt(agent.keys().sk, agent.keys().pk, paillier::Ciphertext{ct}) == 0);
}

TEST_CASE("weighted difference round-trips against plaintext arithmetic") {
  Problem pb = two_agent_problem();
  RunConfig cfg = fast_crypto_config();
  cfg.x0 = std::vector<Vec>{presets::vec1(0.625), presets::vec1(-1.375)};
  ProtocolAgent a1(pb, cfg, 1);
  ProtocolAgent a2(pb, cfg, 2);
  a2.handle_key_announce(a1.key_announce_for(2, 0));

  auto states = a1.announce_and_encrypt(0);
  ProtocolMessage reply = a2.neighbor_compute_weighted_diff(states.at(0));
  Vec recovered = a1.recover_weighted_diff(reply);

  // Plaintext oracle: the effective (quantized) penalty times the difference.
  const double w1 = static_cast<double>(a1.weight_for(2)) / 1e6;
  const double w2 = static_cast<double>(a2.weight_for(1)) / 1e6;
  const double expected = w1 * w2 * (-1.375 - 0.625);
  CHECK(recovered[0] == Catch::Approx(expected).margin(1e-4));
  CHECK(recovered[0] < 0.0);  // sign survives the two's-complement path
}

TEST_CASE("a zero difference recovers exactly zero") {
  Problem pb = two_agent_problem();
  RunConfig cfg = fast_crypto_config();
  cfg.x0 = std::vector<Vec>{presets::vec1(0.875), presets::vec1(0.875)};
  ProtocolAgent a1(pb, cfg, 1);
  ProtocolAgent a2(pb, cfg, 2);
  a2.handle_key_announce(a1.key_announce_for(2, 0));

  ProtocolMessage reply = a2.neighbor_compute_weighted_diff(a1.announce_and_encrypt(0).at(0));
  CHECK(a1.recover_weighted_diff(reply)[0] == 0.0);
}

TEST_CASE("the neighbor path never decrypts; only the owner does") {
  Problem pb = two_agent_problem();
  RunConfig cfg = fast_crypto_config();
  ProtocolAgent a1(pb, cfg, 1);
  ProtocolAgent a2(pb, cfg, 2);
  a2.handle_key_announce(a1.key_announce_for(2, 0));

  DecryptCounter audit;
  auto states = a1.announce_and_encrypt(0);
  ProtocolMessage reply = a2.neighbor_compute_weighted_diff(states.at(0));
  CHECK(audit.count == 0);  // steps 3-5 are public-key only

  a1.recover_weighted_diff(reply);
  CHECK(audit.count == 1);
  CHECK(audit.last_n == a1.keys().pk.n);  // the owner's key, nobody else's
}

TEST_CASE("malformed replies name the sender") {
  Problem pb = two_agent_problem();
  RunConfig cfg = fast_crypto_config();
  ProtocolAgent a1(pb, cfg, 1);
  ProtocolMessage bogus;
  bogus.sender = 2;
  bogus.receiver = 1;
  bogus.body = protocol::WeightedDiffReply{{mpz_class{0}}};
  try {
    a1.recover_weighted_diff(bogus);
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("agent 2") != std::string::npos);
  }
}

TEST_CASE("replying without the sender's key is an error") {
  Problem pb = two_agent_problem();
  RunConfig cfg = fast_crypto_config();
  ProtocolAgent a1(pb, cfg, 1);
  ProtocolAgent a2(pb, cfg, 2);
  auto states = a1.announce_and_encrypt(0);
  CHECK_THROWS_AS(a2.neighbor_compute_weighted_diff(states.at(0)), ProtocolError);
}

TEST_CASE("key/codec headroom is validated") {
  Problem pb = two_agent_problem();
  RunConfig cfg;
  cfg.key_bits = 64;  // 64 < 64 + bits(w) + 2
  CHECK_THROWS_AS(ProtocolAgent(pb, cfg, 1), ConfigError);

  codec::CodecConfig narrow{1000, 32};
  cfg.codec = narrow;
  CHECK_NOTHROW(ProtocolAgent(pb, cfg, 1));  // 64 >= 32 + 10 + 2
}

TEST_CASE("encrypted run matches the plaintext twin within quantization noise") {
  auto preset = presets::comparison();
  RunConfig cfg = fast_crypto_config();
  cfg.max_iterations = 100;
  cfg.stop_tolerance = 0;

  auto plain = admm::run_plaintext(preset.problem, cfg);
  transport::SimTransport net;
  auto enc = protocol::run_encrypted(preset.problem, cfg, net);
  REQUIRE(plain.size() == enc.size());

  double max_dev = 0.0;
  for (int t = 0; t < plain.size(); ++t) {
    for (int i = 0; i < 6; ++i) {
      max_dev = std::max(max_dev, (plain.iterations[t].x[i] - enc.iterations[t].x[i])
                                      .lpNorm<Eigen::Infinity>());
    }
    // The recovered products match the plaintext rho*(x_j - x_i), and the two
    // directions of every edge agree on the penalty without any rho message:
    // the same product of private factors weighted both replies.
    const auto& g = preset.problem.graph;
    for (const auto& e : g.edges()) {
      const Vec plain_product = plain.iterations[t].rho[g.edge_index(e.i, e.j)] *
                                (plain.iterations[t].x[e.j - 1] - plain.iterations[t].x[e.i - 1]);
      const Vec recovered = enc.iterations[t].recovered.at({e.i, e.j});
      CHECK((plain_product - recovered).lpNorm<Eigen::Infinity>() <= 1e-4);
      const Vec reverse = enc.iterations[t].recovered.at({e.j, e.i});
      CHECK((recovered + reverse).lpNorm<Eigen::Infinity>() <= 1e-4);
    }
  }
  CHECK(max_dev <= 1e-3);
}

TEST_CASE("encrypted run converges on the comparison problem") {
  auto preset = presets::comparison();
  RunConfig cfg = fast_crypto_config();
  cfg.max_iterations = 400;
  transport::SimTransport net;
  auto trace = protocol::run_encrypted(preset.problem, cfg, net);
  Vec opt = problem::analytic_optimum(*preset.problem.quadratic);
  CHECK(admm::error_metric_d({trace.back().x}, opt) <= 1e-8);
}

TEST_CASE("ciphertext samples never repeat, even for a constant state") {
  auto preset = presets::constant_state();
  RunConfig cfg = fast_crypto_config();
  cfg.max_iterations = 100;
  cfg.stop_tolerance = 0;
  cfg.x0 = std::vector<Vec>(6, preset.expected_optimum);

  transport::SimTransport net;
  auto trace = protocol::run_encrypted(preset.problem, cfg, net);

  // States never moved.
  for (const auto& rec : trace.iterations) {
    for (const auto& x : rec.x) CHECK((x - preset.expected_optimum).norm() == 0.0);
  }
  // Agent 1's observed reply ciphertexts are fresh every iteration.
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& [t, samples] : trace.cipher_samples) {
    for (const auto& hex : samples) {
      ++total;
      CHECK(seen.insert(hex).second);
    }
  }
  CHECK(total == 3 * trace.size());  // three incoming edges at agent 1
}

TEST_CASE("serialized frames contain no private key and no b factor bytes") {
  Problem pb = two_agent_problem();
  RunConfig cfg = fast_crypto_config();
  cfg.max_iterations = 10;
  cfg.stop_tolerance = 0;

  transport::SimTransport net;
  net.enable_capture();

  // Build the agents first to harvest their secrets for the byte search.
  ProtocolAgent probe1(pb, cfg, 1);
  ProtocolAgent probe2(pb, cfg, 2);
  std::vector<transport::Bytes> secrets;
  for (const ProtocolAgent* a : {&probe1, &probe2}) {
    transport::Bytes lambda_bytes, mu_bytes, w_bytes;
    transport::append_bigint(lambda_bytes, a->keys().sk.lambda);
    transport::append_bigint(mu_bytes, a->keys().sk.mu);
    transport::append_bigint(w_bytes, mpz_class{static_cast<unsigned long>(
                                          a->weight_for(a->id() == 1 ? 2 : 1))});
    secrets.push_back(lambda_bytes);
    secrets.push_back(mu_bytes);
    secrets.push_back(w_bytes);
  }

  protocol::run_encrypted(pb, cfg, net);  // same seed: same keys and b draws
  REQUIRE(!net.captured().empty());
  for (const auto& frame : net.captured()) {
    for (const auto& secret : secrets) {
      CHECK_FALSE(adversary::contains_pattern(frame, secret));
    }
  }
}

TEST_CASE("key announcements are sent once unless strict mode re-sends") {
  Problem pb = two_agent_problem();
  RunConfig cfg = fast_crypto_config();
  cfg.max_iterations = 5;
  cfg.stop_tolerance = 0;

  auto count_key_frames = [](const std::vector<transport::Bytes>& frames) {
    int keys = 0;
    for (const auto& f : frames) {
      if (f[5] == 1) ++keys;
    }
    return keys;
  };

  transport::SimTransport lazy;
  lazy.enable_capture();
  protocol::run_encrypted(pb, cfg, lazy);
  CHECK(count_key_frames(lazy.captured()) == 2);  // one per directed pair

  cfg.strict_reannounce = true;
  transport::SimTransport strict;
  strict.enable_capture();
  protocol::run_encrypted(pb, cfg, strict);
  CHECK(count_key_frames(strict.captured()) == 2 * 6);  // every round, 6 records
}

TEST_CASE("tcp and simulation drivers produce identical iterates") {
  Problem pb = two_agent_problem();
  RunConfig cfg;
  cfg.key_bits = 96;
  cfg.codec = codec::CodecConfig{10000, 48};
  cfg.max_iterations = 15;
  cfg.stop_tolerance = 0;

  transport::SimTransport net;
  auto sim = protocol::run_encrypted(pb, cfg, net);
  auto tcp = protocol::run_encrypted_tcp(
      pb, cfg, {{1, "127.0.0.1", 18451}, {2, "127.0.0.1", 18452}});

  REQUIRE(sim.size() == tcp.size());
  for (int t = 0; t < sim.size(); ++t) {
    for (int i = 0; i < 2; ++i) {
      CHECK((sim.iterations[t].x[i] - tcp.iterations[t].x[i]).norm() == 0.0);
    }
  }
}

TEST_CASE("the tcp driver handles a denser topology with round lookahead") {
  auto preset = presets::comparison();
  RunConfig cfg;
  cfg.key_bits = 96;
  cfg.codec = codec::CodecConfig{10000, 48};
  cfg.max_iterations = 8;
  cfg.stop_tolerance = 0;

  transport::SimTransport net;
  auto sim = protocol::run_encrypted(preset.problem, cfg, net);
  std::vector<transport::Endpoint> eps;
  for (int i = 1; i <= 6; ++i) {
    eps.push_back({i, "127.0.0.1", static_cast<std::uint16_t>(18460 + i)});
  }
  auto tcp = protocol::run_encrypted_tcp(preset.problem, cfg, eps);

  REQUIRE(sim.size() == tcp.size());
  for (int t = 0; t < sim.size(); ++t) {
    for (int i = 0; i < 6; ++i) {
      CHECK((sim.iterations[t].x[i] - tcp.iterations[t].x[i]).norm() == 0.0);
    }
    for (const auto& e : preset.problem.graph.edges()) {
      CHECK(sim.iterations[t].rho[preset.problem.graph.edge_index(e.i, e.j)] ==
            tcp.iterations[t].rho[preset.problem.graph.edge_index(e.i, e.j)]);
    }
  }
}
