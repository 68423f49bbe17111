#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ppdo/admm.hpp"
#include "ppdo/codec.hpp"
#include "ppdo/errors.hpp"
#include "ppdo/problem.hpp"
#include "ppdo/protocol.hpp"
#include "ppdo/rng.hpp"
#include "ppdo/transport.hpp"

namespace ppdo::adversary {

using admm::Trace;
using problem::Graph;
using problem::Problem;
using protocol::EncryptedState;
using protocol::ProtocolMessage;
using protocol::WeightedDiffReply;

// ---------------------------------------------------------------------------
// Degrees-of-freedom counters
// ---------------------------------------------------------------------------

struct DofCount {
  long long equations = 0;
  long long unknowns = 0;
  bool gradient_at_optimum_identifiable = false;
};

/// State-inference system over K+1 observed iterations: (K+1)D equations
/// y^k = b_{i->j}^k b_{j->i}^k (x_j^k - x_i^k) against the (K+1)D unknown
/// states plus K+1 unknown b factors. Always underdetermined by K+1.
inline DofCount count_state_dof(long long k_iterations, long long dimension) {
  if (k_iterations < 0 || dimension < 1) throw DomainError("bad dof arguments");
  DofCount out;
  out.equations = (k_iterations + 1) * dimension;
  out.unknowns = (k_iterations + 1) * dimension + k_iterations + 1;
  return out;
}

/// Gradient-inference system from the public update rule: KD equations. With
/// another legitimate neighbor the aggregate terms are unknown too, giving
/// 3KD + D + 1 unknowns; with the adversary as the only neighbor those terms
/// are known (2KD + D + 1 unknowns) and the KKT relation additionally pins
/// the gradient at the optimum.
inline DofCount count_gradient_dof(long long k_iterations, long long dimension,
                                   bool has_other_neighbor) {
  if (k_iterations < 1 || dimension < 1) throw DomainError("bad dof arguments");
  DofCount out;
  out.equations = k_iterations * dimension;
  if (has_other_neighbor) {
    out.unknowns = 3 * k_iterations * dimension + dimension + 1;
  } else {
    out.unknowns = 2 * k_iterations * dimension + dimension + 1;
    out.gradient_at_optimum_identifiable = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Honest-but-curious estimation study (two-agent worst case)
// ---------------------------------------------------------------------------

/// Everything the honest-but-curious agent i legitimately holds after a run
/// against neighbor j: its measurements y^k = rho^k (x_j^k - x_i^k), its own
/// states, b factors, multipliers, and the public schedule constants. It
/// contains none of the withheld quantities (b_{j->i}, x_j, gamma_j).
struct AdversaryView {
  int adversary_id = 0;
  int target_id = 0;
  int agent_count = 0;  // N, public
  double b_bar = 0.0;   // public cap
  std::vector<Vec> y;            // k = 0..K
  std::vector<Vec> x_self;       // adversary's own states
  std::vector<double> b_self;    // adversary's own b_{i->j}^k as applied
  std::vector<Vec> lambda_self;  // adversary's own lambda_{i,j}^k
  double gamma_self = 0.0;
  double own_h = 0.0, own_p = 1.0;  // adversary's own objective
  Vec own_theta;
  Vec x_star;  // the consensus value, public once converged
};

/// Builds the adversary's view from a finished two-party exchange. The
/// adversary's own schedule draws are replayed from its seed stream, which is
/// exactly how the agent produced them during the run.
inline AdversaryView view_from_run(const Problem& pb, const admm::RunConfig& cfg,
                                   const Trace& trace, int adversary_id, int target_id) {
  const Graph& g = pb.graph;
  if (!pb.quadratic) throw DomainError("adversary study expects a quadratic objective");
  const bool encrypted = !trace.iterations.front().recovered.empty();

  AdversaryView view;
  view.adversary_id = adversary_id;
  view.target_id = target_id;
  view.agent_count = g.agent_count();
  view.b_bar = cfg.b_bar;
  view.own_h = pb.quadratic->h(adversary_id);
  view.own_p = pb.quadratic->p(adversary_id);
  view.own_theta = pb.quadratic->theta(adversary_id);
  view.x_star = trace.back().x[adversary_id - 1];

  // Replay the adversary's own schedule stream.
  Rng rng = Rng::derive(cfg.seed, Rng::Stream::kSchedule,
                        static_cast<std::uint64_t>(adversary_id));
  view.gamma_self = cfg.gamma.kind == admm::GammaPolicy::Kind::kFixed
                        ? cfg.gamma.value
                        : admm::gamma_select(g.agent_count(), cfg.b_bar, cfg.gamma.cap, rng);
  admm::AgentState replay;
  replay.id = adversary_id;
  admm::init_b_factors(replay, g, cfg.b_bar, rng);

  for (int k = 0; k < trace.size(); ++k) {
    const auto& rec = trace.iterations[k];
    const double b_raw = replay.b_out.at(target_id);
    view.b_self.push_back(
        encrypted ? static_cast<double>(protocol::quantize_weight(b_raw, cfg.codec.n_max)) /
                        static_cast<double>(cfg.codec.n_max)
                  : b_raw);
    if (encrypted) {
      view.y.push_back(rec.recovered.at({adversary_id, target_id}));
    } else {
      const double rho = rec.rho[g.edge_index(adversary_id, target_id)];
      view.y.push_back(rho * (rec.x[target_id - 1] - rec.x[adversary_id - 1]));
    }
    view.x_self.push_back(rec.x[adversary_id - 1]);
    view.lambda_self.push_back(rec.lambda.at({adversary_id, target_id}));
    admm::advance_b_factors(replay, rng);
  }
  return view;
}

/// One consistent solution of the adversary's equation systems: sampled
/// b-hat/gamma-hat, back-solved states and gradients, and the fitted
/// quadratic (per-dimension line through the KKT point).
struct EstimationTrial {
  std::vector<double> b_hat;  // target's b factors, sampled
  double gamma_hat = 0.0;
  std::vector<Vec> x_hat;     // k = 0..K
  std::vector<Vec> grad_hat;  // gradient at x_hat^{k+1}, k = 0..K-1
  Vec fit_slope;              // per dimension: grad-hat(x) = a x + c
  Vec fit_intercept;
  Vec global_minimizer;  // argmin of fitted f-hat plus the adversary's own f
  double max_equation_residual = 0.0;
};

/// Solves the adversary's systems for one hypothesis (b_hat, gamma_hat).
/// x-hat comes from the measurement equations; gradients from the
/// update-rule equations; the line fit is least squares
/// constrained through the KKT point (x*, -lambda*), which the two-agent
/// case identifies exactly.
inline EstimationTrial solve_trial(const AdversaryView& view, std::vector<double> b_hat,
                                   double gamma_hat) {
  const int k_max = static_cast<int>(view.y.size()) - 1;  // K
  const int dim = static_cast<int>(view.x_self.front().size());
  EstimationTrial trial;
  trial.b_hat = std::move(b_hat);
  trial.gamma_hat = gamma_hat;

  for (int k = 0; k <= k_max; ++k) {
    const double denom = view.b_self[k] * trial.b_hat[k];
    if (denom == 0.0) throw DomainError("degenerate trial: vanishing b product");
    trial.x_hat.push_back(view.x_self[k] + view.y[k] / denom);
  }
  // Update-rule equations: the aggregate term the target recovered equals
  // -y^k regardless of the sampled b-hat (it cancels by construction).
  for (int k = 0; k + 1 <= k_max; ++k) {
    Vec lambda_target = -view.lambda_self[k];
    trial.grad_hat.push_back(-(1.0 + gamma_hat) * (trial.x_hat[k + 1] - trial.x_hat[k]) -
                             lambda_target - view.y[k]);
  }

  // Self-consistency of the solved systems (the ambiguity is across trials,
  // never within one).
  for (int k = 0; k <= k_max; ++k) {
    const double denom = view.b_self[k] * trial.b_hat[k];
    Vec r = view.y[k] - denom * (trial.x_hat[k] - view.x_self[k]);
    trial.max_equation_residual =
        std::max(trial.max_equation_residual, r.lpNorm<Eigen::Infinity>());
  }

  // KKT-pinned least squares per dimension through (x*, -lambda_target*).
  Vec lambda_target_star = -view.lambda_self.back();
  trial.fit_slope = Vec::Zero(dim);
  trial.fit_intercept = Vec::Zero(dim);
  trial.global_minimizer = Vec::Zero(dim);
  for (int d = 0; d < dim; ++d) {
    const double pin_x = view.x_star[d];
    const double pin_g = -lambda_target_star[d];
    double suu = 0.0, suv = 0.0;
    for (int k = 0; k + 1 <= k_max; ++k) {
      const double u = trial.x_hat[k + 1][d] - pin_x;
      const double v = trial.grad_hat[k][d] - pin_g;
      suu += u * u;
      suv += u * v;
    }
    const double a = suu > 0 ? suv / suu : 0.0;
    const double c = pin_g - a * pin_x;
    trial.fit_slope[d] = a;
    trial.fit_intercept[d] = c;
    // argmin of fhat + own f: a x + c + (2h^2/p) x - (2h/p) theta = 0
    const double own_quad = 2.0 * view.own_h * view.own_h / view.own_p;
    const double own_lin = (2.0 * view.own_h / view.own_p) * view.own_theta[d];
    const double curvature = a + own_quad;
    if (curvature <= 0) throw DomainError("degenerate trial: nonconvex fitted objective");
    trial.global_minimizer[d] = (own_lin - c) / curvature;
  }
  return trial;
}

struct StudySummary {
  std::vector<double> x_hat_spread;    // per iteration: max-min over trials (inf norm)
  double slope_spread = 0.0;           // spread of fitted curvatures
  double max_minimizer_deviation = 0.0;
  double max_equation_residual = 0.0;
};

struct StudyResult {
  std::vector<EstimationTrial> trials;
  StudySummary summary;
};

/// The Section-VI style study: `trials` hypotheses sampled the same random
/// way the true generator works — a private cap in (0, b_bar] first, then a
/// nondecreasing sequence inside it — and gamma-hat in [N b_bar^2,
/// 2 N b_bar^2] since the private threshold is unknown.
inline StudyResult run_estimation_trials(const AdversaryView& view, int trials, Rng& rng) {
  if (view.y.empty()) throw DomainError("adversary view is empty");
  const int k_count = static_cast<int>(view.y.size());
  StudyResult result;
  result.trials.reserve(trials);

  const double gamma_lo = view.agent_count * view.b_bar * view.b_bar;
  for (int trial = 0; trial < trials; ++trial) {
    for (int attempt = 0;; ++attempt) {
      const double cap_hat = rng.uniform_positive(view.b_bar);
      std::vector<double> b_hat(k_count);
      b_hat[0] = rng.uniform_positive(cap_hat);
      for (int k = 1; k < k_count; ++k) {
        b_hat[k] = b_hat[k - 1] + (cap_hat - b_hat[k - 1]) * rng.uniform01();
      }
      const double gamma_hat = gamma_lo + gamma_lo * rng.uniform01();
      try {
        result.trials.push_back(solve_trial(view, std::move(b_hat), gamma_hat));
        break;
      } catch (const DomainError&) {
        if (attempt >= 32) throw;
      }
    }
  }

  // Spreads across trials.
  result.summary.x_hat_spread.assign(k_count, 0.0);
  for (int k = 0; k < k_count; ++k) {
    Vec lo = result.trials.front().x_hat[k];
    Vec hi = lo;
    for (const auto& t : result.trials) {
      lo = lo.cwiseMin(t.x_hat[k]);
      hi = hi.cwiseMax(t.x_hat[k]);
    }
    result.summary.x_hat_spread[k] = (hi - lo).lpNorm<Eigen::Infinity>();
  }
  double slope_lo = result.trials.front().fit_slope.minCoeff();
  double slope_hi = result.trials.front().fit_slope.maxCoeff();
  for (const auto& t : result.trials) {
    slope_lo = std::min(slope_lo, t.fit_slope.minCoeff());
    slope_hi = std::max(slope_hi, t.fit_slope.maxCoeff());
    result.summary.max_minimizer_deviation =
        std::max(result.summary.max_minimizer_deviation,
                 (t.global_minimizer - view.x_star).lpNorm<Eigen::Infinity>());
    result.summary.max_equation_residual =
        std::max(result.summary.max_equation_residual, t.max_equation_residual);
  }
  result.summary.slope_spread = slope_hi - slope_lo;
  return result;
}

// ---------------------------------------------------------------------------
// External eavesdropper
// ---------------------------------------------------------------------------

struct CaptureStats {
  std::size_t frames = 0;
  std::size_t ciphertexts = 0;
  std::size_t repeated_ciphertexts = 0;
  std::size_t ciphertext_bytes = 0;
  double entropy_bits_per_byte = 0.0;
  std::size_t plaintext_pattern_hits = 0;
};

/// Wire form of a state value as it would appear in a frame: the
/// length-prefixed big-endian encoding of its fixed-point slot.
inline transport::Bytes encoded_state_pattern(const codec::CodecConfig& cfg, double value) {
  transport::Bytes out;
  const auto slot = codec::encode_real(cfg, value);
  transport::append_bigint(out, mpz_class{static_cast<unsigned long>(slot.slot)});
  return out;
}

inline bool contains_pattern(const transport::Bytes& haystack, const transport::Bytes& needle) {
  if (needle.empty() || haystack.size() < needle.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

/// Statistics over a full wire capture: ciphertext repeat collisions,
/// byte entropy of ciphertext payloads, and occurrences of any of the given
/// true-state byte patterns anywhere in the raw frames.
inline CaptureStats eavesdropper_capture(const std::vector<transport::Bytes>& frames,
                                         const std::vector<transport::Bytes>& state_patterns) {
  CaptureStats stats;
  stats.frames = frames.size();
  std::set<std::string> seen;
  std::array<std::size_t, 256> histogram{};

  for (const auto& frame : frames) {
    for (const auto& pattern : state_patterns) {
      if (contains_pattern(frame, pattern)) ++stats.plaintext_pattern_hits;
    }
    ProtocolMessage msg = transport::deserialize(frame);
    const std::vector<mpz_class>* cts = nullptr;
    if (const auto* es = std::get_if<EncryptedState>(&msg.body)) {
      cts = &es->ciphertexts;
    } else if (const auto* wr = std::get_if<WeightedDiffReply>(&msg.body)) {
      cts = &wr->ciphertexts;
    }
    if (!cts) continue;
    for (const auto& c : *cts) {
      ++stats.ciphertexts;
      if (!seen.insert(c.get_str(16)).second) ++stats.repeated_ciphertexts;
      transport::Bytes bytes;
      transport::append_bigint(bytes, c);
      for (std::size_t k = 4; k < bytes.size(); ++k) {  // skip the length prefix
        ++histogram[bytes[k]];
        ++stats.ciphertext_bytes;
      }
    }
  }

  if (stats.ciphertext_bytes > 0) {
    double entropy = 0.0;
    for (std::size_t count : histogram) {
      if (count == 0) continue;
      const double p = static_cast<double>(count) / static_cast<double>(stats.ciphertext_bytes);
      entropy -= p * std::log2(p);
    }
    stats.entropy_bits_per_byte = entropy;
  }
  return stats;
}

}  // namespace ppdo::adversary
