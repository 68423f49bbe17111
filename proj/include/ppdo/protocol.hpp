#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ppdo/admm.hpp"
#include "ppdo/codec.hpp"
#include "ppdo/errors.hpp"
#include "ppdo/messages.hpp"
#include "ppdo/paillier.hpp"
#include "ppdo/problem.hpp"
#include "ppdo/rng.hpp"
#include "ppdo/transport.hpp"

namespace ppdo::protocol {

using admm::AgentState;
using admm::RunConfig;
using admm::Trace;
using problem::Graph;
using problem::Problem;

/// Integer weight actually applied in ciphertext: round(b * n_max), floored
/// at 1 so a pathologically small b cannot zero out a penalty.
inline std::uint64_t quantize_weight(double b, std::uint64_t n_max) {
  const long long w = std::llround(b * static_cast<double>(n_max));
  return w < 1 ? 1ull : static_cast<std::uint64_t>(w);
}

/// The 2's-complement trick only survives the homomorphic weighting if the
/// true integer value never wraps mod n before the slot mask is applied:
/// bits(n) must exceed word_bits + bits(w_max) + 1.
inline void validate_key_codec_headroom(unsigned key_bits, const codec::CodecConfig& codec,
                                        double b_bar) {
  codec.validate();
  const std::uint64_t w_max = quantize_weight(b_bar, codec.n_max);
  unsigned w_bits = 0;
  for (std::uint64_t v = w_max; v != 0; v >>= 1) ++w_bits;
  if (key_bits < codec.word_bits + w_bits + 2) {
    throw ConfigError("key too small for codec: need at least " +
                      std::to_string(codec.word_bits + w_bits + 2) + " key bits");
  }
}

/// One agent of the encrypted exchange. It owns its key pair, its private b factors,
/// and its multipliers; everything it emits is a ProtocolMessage, and the
/// message types cannot carry the private key or any b value.
class ProtocolAgent {
 public:
  ProtocolAgent(const Problem& pb, const RunConfig& cfg, int id)
      : pb_(&pb),
        cfg_(cfg),
        sched_rng_(Rng::derive(cfg.seed, Rng::Stream::kSchedule, static_cast<std::uint64_t>(id))),
        crypto_rng_(Rng::derive(cfg.seed, Rng::Stream::kCrypto, static_cast<std::uint64_t>(id))) {
    const Graph& g = pb.graph;
    st_.id = id;
    st_.x = cfg.x0 ? (*cfg.x0)[id - 1] : Vec::Zero(g.dimension());
    st_.gamma = cfg.gamma.kind == admm::GammaPolicy::Kind::kFixed
                    ? cfg.gamma.value
                    : admm::gamma_select(g.agent_count(), cfg.b_bar, cfg.gamma.cap, sched_rng_);
    admm::init_b_factors(st_, g, cfg.b_bar, sched_rng_);
    keys_ = paillier::generate_keys(cfg.key_bits, crypto_rng_);
    validate_key_codec_headroom(cfg.key_bits, cfg.codec, cfg.b_bar);
  }

  int id() const { return st_.id; }
  const AgentState& state() const { return st_; }
  const paillier::PublicKey& public_key() const { return keys_.pk; }
  const paillier::KeyPair& keys() const { return keys_; }

  std::uint64_t weight_for(int j) const {
    return quantize_weight(st_.b_out.at(j), cfg_.codec.n_max);
  }

  ProtocolMessage key_announce_for(int j, int t) const {
    return ProtocolMessage{static_cast<std::uint16_t>(st_.id), static_cast<std::uint16_t>(j),
                           static_cast<std::uint32_t>(t), KeyAnnounce{keys_.pk.n}};
  }

  void handle_key_announce(const ProtocolMessage& msg) {
    const auto& ka = std::get<KeyAnnounce>(msg.body);
    paillier::PublicKey pk{ka.n, ka.n + 1, ka.n * ka.n};
    neighbor_pk_.insert_or_assign(static_cast<int>(msg.sender), std::move(pk));
  }

  bool knows_key_of(int j) const { return neighbor_pk_.contains(j); }

  /// Outbound leg: encrypt -x_i^t under the own key, one independently
  /// encrypted message per neighbor and per dimension.
  std::vector<ProtocolMessage> announce_and_encrypt(int t) {
    std::vector<ProtocolMessage> out;
    for (int j : pb_->graph.neighbors(st_.id)) {
      EncryptedState body;
      for (int d = 0; d < st_.x.size(); ++d) {
        const auto slot = codec::encode_real(cfg_.codec, -st_.x[d]);
        body.ciphertexts.push_back(
            paillier::encrypt(keys_.pk, mpz_class{static_cast<unsigned long>(slot.slot)},
                              crypto_rng_)
                .value);
      }
      out.push_back(ProtocolMessage{static_cast<std::uint16_t>(st_.id),
                                    static_cast<std::uint16_t>(j),
                                    static_cast<std::uint32_t>(t), std::move(body)});
    }
    return out;
  }

  /// Neighbor leg: E_i(x_j) * E_i(-x_i), then raised to the quantized
  /// b_{j->i}. Public-key operations only; nothing is decrypted.
  ProtocolMessage neighbor_compute_weighted_diff(const ProtocolMessage& msg) {
    const int i = static_cast<int>(msg.sender);
    auto pk_it = neighbor_pk_.find(i);
    if (pk_it == neighbor_pk_.end()) {
      throw ProtocolError("no public key announced by agent " + std::to_string(i));
    }
    const paillier::PublicKey& pk_i = pk_it->second;
    const auto& es = std::get<EncryptedState>(msg.body);
    if (static_cast<int>(es.ciphertexts.size()) != st_.x.size()) {
      throw ProtocolError("encrypted state has wrong dimension");
    }
    const std::uint64_t w = weight_for(i);
    if (mpz_class{static_cast<unsigned long>(w)} >= pk_i.n) {
      throw ConfigError("scale weight exceeds the plaintext space of agent " + std::to_string(i));
    }
    WeightedDiffReply body;
    for (int d = 0; d < st_.x.size(); ++d) {
      const auto slot = codec::encode_real(cfg_.codec, st_.x[d]);
      paillier::Ciphertext mine = paillier::encrypt(
          pk_i, mpz_class{static_cast<unsigned long>(slot.slot)}, crypto_rng_);
      paillier::Ciphertext diff =
          paillier::hom_add(pk_i, mine, paillier::Ciphertext{es.ciphertexts[d]});
      body.ciphertexts.push_back(paillier::hom_scale(pk_i, diff, w).value);
    }
    return ProtocolMessage{static_cast<std::uint16_t>(st_.id), msg.sender, msg.iteration,
                           std::move(body)};
  }

  /// Return leg: decrypt, mask to the slot width, re-weight by the own quantized
  /// b_{i->j}, and descale by n_max^3 (one state scaling plus two b scalings).
  Vec recover_weighted_diff(const ProtocolMessage& reply) {
    const int j = static_cast<int>(reply.sender);
    const auto& body = std::get<WeightedDiffReply>(reply.body);
    if (static_cast<int>(body.ciphertexts.size()) != st_.x.size()) {
      throw ProtocolError("weighted diff reply from agent " + std::to_string(j) +
                          " has wrong dimension");
    }
    const std::uint64_t w_own = weight_for(j);
    const long double cube = static_cast<long double>(cfg_.codec.n_max) *
                             static_cast<long double>(cfg_.codec.n_max) *
                             static_cast<long double>(cfg_.codec.n_max);
    Vec out(st_.x.size());
    for (int d = 0; d < st_.x.size(); ++d) {
      mpz_class raw;
      try {
        raw = paillier::decrypt(keys_.sk, keys_.pk, paillier::Ciphertext{body.ciphertexts[d]});
      } catch (const MalformedCiphertextError& e) {
        throw ProtocolError("malformed ciphertext from agent " + std::to_string(j) + ": " +
                            e.what());
      }
      const std::int64_t s = codec::signed_value(cfg_.codec, codec::mask_to_word(raw, cfg_.codec));
      const __int128 scaled = static_cast<__int128>(s) * static_cast<__int128>(w_own);
      out[d] = static_cast<double>(static_cast<long double>(scaled) / cube);
    }
    return out;
  }

  /// Multiplier update from the recovered products (with the t = 0 rule).
  void lambda_round(int t, const std::map<int, Vec>& recovered) {
    admm::lambda_update_from_products(st_, recovered, t);
  }

  /// Local solve of the reduced stationarity equation. Returns the step size
  /// ||x^{t+1} - x^t||_inf for the caller's stop rule.
  double x_round(const std::map<int, Vec>& recovered) {
    Vec sum = Vec::Zero(st_.x.size());
    for (const auto& [j, r] : recovered) sum += r;
    Vec x_next = admm::x_update_from_sum(st_, sum, *pb_->objective);
    const double delta = (x_next - st_.x).lpNorm<Eigen::Infinity>();
    st_.x = std::move(x_next);
    if (st_.x.lpNorm<Eigen::Infinity>() > cfg_.divergence_bound) {
      throw SolverError("divergence detector tripped at agent " + std::to_string(st_.id));
    }
    return delta;
  }

  /// Schedule advance: draw the next private b factors.
  void advance_schedule() { admm::advance_b_factors(st_, sched_rng_); }

 private:
  const Problem* pb_;
  RunConfig cfg_;
  AgentState st_;
  Rng sched_rng_;
  Rng crypto_rng_;
  paillier::KeyPair keys_;
  std::map<int, paillier::PublicKey> neighbor_pk_;
};

namespace detail {

/// Effective penalty of an edge as the quantized weights make it.
inline double effective_rho(const ProtocolAgent& a, const ProtocolAgent& b,
                            std::uint64_t n_max) {
  const long double scale = static_cast<long double>(n_max);
  return static_cast<double>(static_cast<long double>(a.weight_for(b.id())) *
                             static_cast<long double>(b.weight_for(a.id())) / (scale * scale));
}

inline admm::IterationRecord make_record(const Problem& pb,
                                         const std::vector<ProtocolAgent>& agents,
                                         const std::vector<std::map<int, Vec>>& recovered,
                                         std::uint64_t n_max, double millis) {
  const Graph& g = pb.graph;
  admm::IterationRecord rec;
  for (const auto& a : agents) rec.x.push_back(a.state().x);
  rec.rho.resize(g.edge_count());
  for (int m = 0; m < g.edge_count(); ++m) {
    const auto& e = g.edges()[m];
    rec.rho[m] = effective_rho(agents[e.i - 1], agents[e.j - 1], n_max);
  }
  for (const auto& a : agents) {
    for (const auto& [j, l] : a.state().lambda_edge) rec.lambda[{a.id(), j}] = l;
    for (const auto& [j, r] : recovered[a.id() - 1]) rec.recovered[{a.id(), j}] = r;
  }
  rec.residual = admm::consensus_residual(g, rec.x);
  rec.objective_gap = admm::detail::objective_gap(pb, rec.x);
  rec.millis = millis;
  return rec;
}

}  // namespace detail

/// The encrypted exchange over the deterministic in-process transport, in lockstep
/// rounds. Every round runs the full encrypted exchange; the x-update of the
/// final round is skipped so the trace ends, like the plaintext one, on a
/// completed lambda update.
inline Trace run_encrypted(const Problem& pb, const RunConfig& cfg,
                           transport::SimTransport& net) {
  cfg.validate_common(pb);
  admm::detail::gate_objective(pb, cfg);
  const Graph& g = pb.graph;
  std::vector<ProtocolAgent> agents;
  agents.reserve(g.agent_count());
  for (int i = 1; i <= g.agent_count(); ++i) agents.emplace_back(pb, cfg, i);

  if (!cfg.waive_condition_checks) {
    std::vector<double> gammas;
    for (const auto& a : agents) gammas.push_back(a.state().gamma);
    auto report = admm::check_condition_B(gammas, g, cfg.b_bar * cfg.b_bar);
    if (!report.ok) {
      throw ConfigError("Condition B fails: smallest eigenvalue " +
                        std::to_string(report.min_eigenvalue));
    }
  }

  Trace trace;
  int streak = 0;
  bool stop = false;
  for (int t = 0;; ++t) {
    const auto started = std::chrono::steady_clock::now();

    // Key announcements (t = 0, or every round in strict mode) followed by
    // the encrypted states.
    const bool announce_keys = t == 0 || cfg.strict_reannounce;
    for (auto& a : agents) {
      if (announce_keys) {
        for (int j : g.neighbors(a.id())) net.send(a.key_announce_for(j, t));
      }
      for (auto& msg : a.announce_and_encrypt(t)) net.send(msg);
    }

    // Neighbors answer with weighted differences.
    for (auto& a : agents) {
      const int expected = g.degree(a.id()) * (announce_keys ? 2 : 1);
      for (int k = 0; k < expected; ++k) {
        ProtocolMessage msg = net.receive(a.id());
        if (std::holds_alternative<KeyAnnounce>(msg.body)) {
          a.handle_key_announce(msg);
        } else if (std::holds_alternative<EncryptedState>(msg.body)) {
          net.send(a.neighbor_compute_weighted_diff(msg));
        } else {
          throw ProtocolError("unexpected reply before the exchange finished");
        }
      }
    }

    // Owners decrypt their replies.
    std::vector<std::map<int, Vec>> recovered(g.agent_count());
    for (auto& a : agents) {
      for (int k = 0; k < g.degree(a.id()); ++k) {
        ProtocolMessage msg = net.receive(a.id());
        if (!std::holds_alternative<WeightedDiffReply>(msg.body)) {
          throw ProtocolError("expected a weighted diff reply");
        }
        if (a.id() == 1) {
          const auto& body = std::get<WeightedDiffReply>(msg.body);
          trace.cipher_samples[t].push_back(body.ciphertexts.at(0).get_str(16));
        }
        recovered[a.id() - 1][static_cast<int>(msg.sender)] = a.recover_weighted_diff(msg);
      }
    }

    // Multiplier update.
    for (auto& a : agents) a.lambda_round(t, recovered[a.id() - 1]);

    const double millis = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - started)
                              .count();
    trace.iterations.push_back(detail::make_record(pb, agents, recovered, cfg.codec.n_max, millis));

    if (stop || t == cfg.max_iterations) break;

    // Local solves, then the schedule advances.
    double max_delta = 0.0;
    for (auto& a : agents) max_delta = std::max(max_delta, a.x_round(recovered[a.id() - 1]));
    for (auto& a : agents) a.advance_schedule();
    if (cfg.stop_tolerance > 0) {
      streak = max_delta < cfg.stop_tolerance ? streak + 1 : 0;
      if (streak >= cfg.stop_window) stop = true;
    }
  }
  return trace;
}

/// The encrypted exchange over TCP: one thread and one framed TCP endpoint per agent,
/// round barrier by message counting. Runs a fixed horizon (the stop rule
/// needs a global view that distributed agents do not have).
inline Trace run_encrypted_tcp(const Problem& pb, const RunConfig& cfg,
                               std::vector<transport::Endpoint> endpoints = {}) {
  cfg.validate_common(pb);
  admm::detail::gate_objective(pb, cfg);
  const Graph& g = pb.graph;
  if (endpoints.empty()) {
    for (int i = 1; i <= g.agent_count(); ++i) endpoints.push_back(transport::Endpoint{i});
  }

  struct RoundLog {
    std::vector<Vec> x;                 // per round, this agent
    std::vector<std::map<int, Vec>> lambda;
    std::vector<std::map<int, Vec>> recovered;
    std::vector<std::map<int, std::uint64_t>> weights;
  };
  std::vector<RoundLog> logs(g.agent_count());
  std::vector<std::exception_ptr> failures(g.agent_count());

  auto agent_main = [&](int id) {
    try {
      transport::TcpTransport net(id, endpoints);
      ProtocolAgent agent(pb, cfg, id);
      RoundLog& log = logs[id - 1];
      const int deg = g.degree(id);

      // Give every listener a moment to come up before connecting out.
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      for (int j : g.neighbors(id)) net.send(agent.key_announce_for(j, 0));

      // States that cannot be answered yet: the sender's key has not arrived,
      // or they belong to the next round (a neighbor may run one round ahead).
      std::vector<ProtocolMessage> pending_states;
      for (int t = 0; t <= cfg.max_iterations; ++t) {
        if (cfg.strict_reannounce && t > 0) {
          for (int j : g.neighbors(id)) net.send(agent.key_announce_for(j, t));
        }
        for (auto& msg : agent.announce_and_encrypt(t)) net.send(msg);

        std::map<int, Vec> recovered;
        int states_answered = 0;
        auto drain_pending = [&] {
          auto it = pending_states.begin();
          while (it != pending_states.end()) {
            if (it->iteration == static_cast<std::uint32_t>(t) &&
                agent.knows_key_of(static_cast<int>(it->sender))) {
              net.send(agent.neighbor_compute_weighted_diff(*it));
              ++states_answered;
              it = pending_states.erase(it);
            } else {
              ++it;
            }
          }
        };
        drain_pending();
        while (states_answered < deg || static_cast<int>(recovered.size()) < deg) {
          ProtocolMessage msg = net.receive(id);
          if (std::holds_alternative<KeyAnnounce>(msg.body)) {
            agent.handle_key_announce(msg);
            drain_pending();
          } else if (std::holds_alternative<EncryptedState>(msg.body)) {
            if (msg.iteration != static_cast<std::uint32_t>(t) &&
                msg.iteration != static_cast<std::uint32_t>(t + 1)) {
              throw ProtocolError("state from an unexpected round");
            }
            pending_states.push_back(std::move(msg));
            drain_pending();
          } else {
            if (msg.iteration != static_cast<std::uint32_t>(t)) {
              throw ProtocolError("reply from an unexpected round");
            }
            recovered[static_cast<int>(msg.sender)] = agent.recover_weighted_diff(msg);
          }
        }

        agent.lambda_round(t, recovered);
        log.x.push_back(agent.state().x);
        log.lambda.push_back(agent.state().lambda_edge);
        log.recovered.push_back(recovered);
        std::map<int, std::uint64_t> ws;
        for (int j : g.neighbors(id)) ws[j] = agent.weight_for(j);
        log.weights.push_back(ws);

        if (t == cfg.max_iterations) break;
        agent.x_round(recovered);
        agent.advance_schedule();
      }
    } catch (...) {
      failures[id - 1] = std::current_exception();
    }
  };

  std::vector<std::thread> threads;
  for (int i = 1; i <= g.agent_count(); ++i) threads.emplace_back(agent_main, i);
  for (auto& t : threads) t.join();
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  // Merge the per-agent logs into one trace.
  Trace trace;
  const std::size_t rounds = logs.front().x.size();
  const long double scale = static_cast<long double>(cfg.codec.n_max);
  for (std::size_t t = 0; t < rounds; ++t) {
    admm::IterationRecord rec;
    for (const auto& log : logs) rec.x.push_back(log.x[t]);
    rec.rho.resize(g.edge_count());
    for (int m = 0; m < g.edge_count(); ++m) {
      const auto& e = g.edges()[m];
      rec.rho[m] = static_cast<double>(
          static_cast<long double>(logs[e.i - 1].weights[t].at(e.j)) *
          static_cast<long double>(logs[e.j - 1].weights[t].at(e.i)) / (scale * scale));
    }
    for (int i = 1; i <= g.agent_count(); ++i) {
      for (const auto& [j, l] : logs[i - 1].lambda[t]) rec.lambda[{i, j}] = l;
      for (const auto& [j, r] : logs[i - 1].recovered[t]) rec.recovered[{i, j}] = r;
    }
    rec.residual = admm::consensus_residual(g, rec.x);
    rec.objective_gap = admm::detail::objective_gap(pb, rec.x);
    trace.iterations.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace ppdo::protocol
