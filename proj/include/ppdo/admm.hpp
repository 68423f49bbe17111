#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppdo/codec.hpp"
#include "ppdo/errors.hpp"
#include "ppdo/problem.hpp"
#include "ppdo/rng.hpp"

namespace ppdo::admm {

using problem::Graph;
using problem::Objective;
using problem::Problem;

/// Everything one agent owns across iterations: its state vector, the
/// per-neighbor multipliers lambda_{i,j}, the proximal coefficient gamma_i,
/// and the private penalty factors b_{i->j} with their caps.
struct AgentState {
  int id = 0;
  Vec x;
  std::map<int, Vec> lambda_edge;  // j -> lambda_{i,j}
  double gamma = 0.0;
  std::map<int, double> b_out;  // j -> b_{i->j}^t, nondecreasing in t
  std::map<int, double> b_cap;  // j -> private cap bbar_{i->j}

  /// lambda_i = sum_j lambda_{i,j}; derived, never mutated independently.
  Vec lambda_agg() const {
    Vec sum = Vec::Zero(x.size());
    for (const auto& [j, l] : lambda_edge) sum += l;
    return sum;
  }
};

/// The effective penalty values for one iteration: one rho per canonical
/// edge (symmetric by construction), the bookkeeping rho_{i,i} values, and
/// the public/private bounds the randomized schedule runs under.
struct PenaltySchedule {
  std::vector<double> rho;       // per canonical edge, rho_{i,j} = rho_{j,i}
  std::vector<double> rho_self;  // per agent: 1 - sum_{j != i} rho_{i,j}
  double b_bar = 0.0;            // global cap, public
  double gamma_cap = 0.0;        // bbarbar, private threshold

  double rho_at(const Graph& g, int i, int j) const { return rho.at(g.edge_index(i, j)); }
};

struct GammaPolicy {
  enum class Kind { kFixed, kSampled } kind = Kind::kFixed;
  double value = 3.0;  // fixed gamma
  double cap = 0.0;    // bbarbar when sampled

  static GammaPolicy fixed(double v) { return {Kind::kFixed, v, 0.0}; }
  static GammaPolicy sampled(double cap) { return {Kind::kSampled, 0.0, cap}; }
};

struct RunConfig {
  int max_iterations = 500;
  double stop_tolerance = 1e-9;  // <= 0 disables the early stop
  int stop_window = 5;
  std::uint64_t seed = 1;
  double b_bar = 0.65;
  GammaPolicy gamma = GammaPolicy::fixed(3.0);
  double divergence_bound = 1e12;
  bool waive_condition_checks = false;
  std::optional<std::vector<Vec>> x0;  // default: zeros

  // Encrypted-mode settings; ignored by the plaintext path.
  unsigned key_bits = 256;
  codec::CodecConfig codec{};
  bool strict_reannounce = false;

  void validate_common(const Problem& pb) const {
    std::vector<std::string> faults;
    if (max_iterations < 1) faults.push_back("max_iterations must be at least 1");
    if (stop_window < 1) faults.push_back("stop_window must be at least 1");
    if (!(b_bar > 0)) faults.push_back("b_bar must be positive");
    if (gamma.kind == GammaPolicy::Kind::kFixed && !(gamma.value > 0)) {
      faults.push_back("fixed gamma must be positive");
    }
    if (gamma.kind == GammaPolicy::Kind::kSampled &&
        gamma.cap < pb.graph.agent_count() * b_bar * b_bar) {
      faults.push_back("gamma cap below N*b_bar^2");
    }
    if (x0 && static_cast<int>(x0->size()) != pb.graph.agent_count()) {
      faults.push_back("x0 must provide one vector per agent");
    }
    if (!faults.empty()) {
      std::string all;
      for (const auto& f : faults) all += (all.empty() ? "" : "; ") + f;
      throw ConfigError("invalid run config: " + all);
    }
  }
};

/// One iteration snapshot. lambda is stored per directed pair so encrypted
/// runs (where the two copies differ by quantization noise) stay faithful;
/// plaintext runs keep them exactly antisymmetric.
struct IterationRecord {
  std::vector<Vec> x;                           // per agent
  std::vector<double> rho;                      // per canonical edge
  std::map<std::pair<int, int>, Vec> lambda;    // (i,j) -> lambda_{i,j}
  std::map<std::pair<int, int>, Vec> recovered; // (i,j) -> rho*(x_j - x_i) as agent i saw it
  double residual = 0.0;
  double objective_gap = std::numeric_limits<double>::quiet_NaN();
  double millis = 0.0;
};

struct Trace {
  std::vector<IterationRecord> iterations;
  std::map<int, std::vector<std::string>> cipher_samples;  // encrypted runs only

  int size() const { return static_cast<int>(iterations.size()); }
  const IterationRecord& back() const { return iterations.back(); }
};

inline Vec stack_states(const std::vector<Vec>& x) {
  int total = 0;
  for (const Vec& v : x) total += static_cast<int>(v.size());
  Vec out(total);
  int at = 0;
  for (const Vec& v : x) {
    out.segment(at, v.size()) = v;
    at += static_cast<int>(v.size());
  }
  return out;
}

/// Stacked multiplier in the canonical edge order (lambda_{i,j} with i < j).
inline Vec stack_lambda(const IterationRecord& rec, const Graph& g) {
  const int d = g.dimension();
  Vec out(g.edge_count() * d);
  for (int m = 0; m < g.edge_count(); ++m) {
    const auto& e = g.edges()[m];
    out.segment(m * d, d) = rec.lambda.at({e.i, e.j});
  }
  return out;
}

/// Per-edge penalties expanded to |E|*D diagonal entries.
inline Vec rho_diagonal(const std::vector<double>& rho, int dimension) {
  Vec out(static_cast<int>(rho.size()) * dimension);
  for (std::size_t m = 0; m < rho.size(); ++m) {
    out.segment(static_cast<int>(m) * dimension, dimension).setConstant(rho[m]);
  }
  return out;
}

inline double consensus_residual(const Graph& g, const std::vector<Vec>& x) {
  double sq = 0.0;
  for (const auto& e : g.edges()) sq += (x[e.i - 1] - x[e.j - 1]).squaredNorm();
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Randomized monotone penalty schedule
// ---------------------------------------------------------------------------

/// gamma_i uniform in [N*b_bar^2, gamma_cap], fixed for the whole run.
inline double gamma_select(int agent_count, double b_bar, double gamma_cap, Rng& rng) {
  const double lo = agent_count * b_bar * b_bar;
  if (gamma_cap < lo) throw ConfigError("gamma cap below N*b_bar^2");
  return lo + (gamma_cap - lo) * rng.uniform01();
}

/// Draws the private caps bbar_{i->j} in (0, b_bar] and the initial
/// b_{i->j}^0 in (0, bbar_{i->j}], in ascending neighbor order.
inline void init_b_factors(AgentState& st, const Graph& g, double b_bar, Rng& rng) {
  for (int j : g.neighbors(st.id)) {
    const double cap = rng.uniform_positive(b_bar);
    st.b_cap[j] = cap;
    st.b_out[j] = rng.uniform_positive(cap);
  }
}

/// b_{i->j}^{t+1} uniform in [b_{i->j}^t, bbar_{i->j}]: nondecreasing and
/// bounded, which is what Condition A needs from the composed rho.
inline void advance_b_factors(AgentState& st, Rng& rng) {
  for (auto& [j, b] : st.b_out) {
    const double cap = st.b_cap.at(j);
    b = b + (cap - b) * rng.uniform01();
  }
}

/// Exchange-time reconciliation of the two sides' penalty proposals.
inline double reconcile_rho(double mine, double theirs) { return std::min(mine, theirs); }

/// Composes the symmetric per-edge penalties from the agents' private
/// factors (product construction) and applies the min reconciliation of the
/// two sides' proposals, then fills in rho_{i,i} = 1 - sum_{j!=i} rho_{i,j}.
inline PenaltySchedule compose_schedule(const Graph& g, const std::vector<AgentState>& agents,
                                        double b_bar, double gamma_cap) {
  PenaltySchedule sched;
  sched.b_bar = b_bar;
  sched.gamma_cap = gamma_cap;
  sched.rho.resize(g.edge_count());
  for (int m = 0; m < g.edge_count(); ++m) {
    const auto& e = g.edges()[m];
    const double from_i = agents[e.i - 1].b_out.at(e.j) * agents[e.j - 1].b_out.at(e.i);
    const double from_j = agents[e.j - 1].b_out.at(e.i) * agents[e.i - 1].b_out.at(e.j);
    sched.rho[m] = reconcile_rho(from_i, from_j);
  }
  sched.rho_self.resize(g.agent_count());
  for (int i = 1; i <= g.agent_count(); ++i) {
    double sum = 0.0;
    for (int j : g.neighbors(i)) sum += sched.rho_at(g, i, j);
    sched.rho_self[i - 1] = 1.0 - sum;
  }
  return sched;
}

// ---------------------------------------------------------------------------
// Per-agent updates
// ---------------------------------------------------------------------------

/// lambda_{i,j}^t = lambda_{i,j}^{t-1} + rho_{i,j}^t (x_i^t - x_j^t);
/// at t = 0 the multiplier is initialized to rho^0 (x_i^0 - x_j^0).
inline AgentState lambda_update(AgentState state, const std::map<int, Vec>& neighbor_x,
                                const Graph& g, const PenaltySchedule& sched, int t) {
  for (int j : g.neighbors(state.id)) {
    auto it = neighbor_x.find(j);
    if (it == neighbor_x.end()) {
      throw ProtocolError("lambda update missing state of neighbor " + std::to_string(j));
    }
    Vec step = sched.rho_at(g, state.id, j) * (state.x - it->second);
    if (t == 0) {
      state.lambda_edge[j] = step;
    } else {
      state.lambda_edge.at(j) += step;
    }
  }
  return state;
}

/// Same update driven by the recovered products rho_{i,j}(x_j - x_i), which
/// is the only form available in the encrypted protocol.
inline void lambda_update_from_products(AgentState& state, const std::map<int, Vec>& recovered,
                                        int t) {
  for (const auto& [j, r] : recovered) {
    if (t == 0) {
      state.lambda_edge[j] = -r;
    } else {
      state.lambda_edge.at(j) -= r;
    }
  }
}

struct InnerSolverOptions {
  int budget = 200;
  double tolerance = 1e-10;
  bool force_iterative = false;  // tests: bypass the closed-form hook
};

namespace detail {

/// Barzilai-Borwein gradient descent on the strongly convex subproblem
/// phi(x) = f_i(x) + (coeff/2)||x||^2 + rhs^T x; stops on the stationarity
/// residual. Used when the objective has no closed-form hook.
inline Vec solve_stationarity_bb(const Objective& obj, int agent, double coeff, const Vec& rhs,
                                 const Vec& warm_start, const InnerSolverOptions& opts) {
  Vec x = warm_start;
  auto grad = [&](const Vec& v) -> Vec { return obj.gradient(agent, v) + coeff * v + rhs; };
  Vec g = grad(x);
  double step = 1.0 / (1.0 + coeff);
  for (int it = 0; it < opts.budget; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= opts.tolerance) return x;
    Vec x_next = x - step * g;
    Vec g_next = grad(x_next);
    Vec s = x_next - x;
    Vec y = g_next - g;
    const double sy = s.dot(y);
    if (sy > 0) step = s.squaredNorm() / sy;
    x = std::move(x_next);
    g = std::move(g_next);
  }
  if (g.lpNorm<Eigen::Infinity>() <= opts.tolerance) return x;
  throw SolverError("inner solver exhausted its budget for agent " + std::to_string(agent));
}

}  // namespace detail

/// Solves the reduced stationarity equation
///   grad f_i(x) + (1+gamma_i) x + lambda_i^t - S_i - (1+gamma_i) x_i^t = 0
/// where S_i = sum_j rho_{i,j}^t (x_j^t - x_i^t). Strong convexity from the
/// (1+gamma_i) term makes the solution unique. Note rho_{i,i} never appears:
/// it is absorbed into the unit coefficient.
inline Vec x_update_from_sum(const AgentState& state, const Vec& weighted_diff_sum,
                             const Objective& obj, const InnerSolverOptions& opts = {}) {
  const double coeff = 1.0 + state.gamma;
  Vec rhs = state.lambda_agg() - weighted_diff_sum - coeff * state.x;
  if (!opts.force_iterative) {
    if (auto closed = obj.solve_stationarity(state.id, coeff, rhs)) return *closed;
  }
  return detail::solve_stationarity_bb(obj, state.id, coeff, rhs, state.x, opts);
}

inline Vec x_update(const AgentState& state, const std::map<int, Vec>& neighbor_x,
                    const Graph& g, const PenaltySchedule& sched, const Objective& obj,
                    const InnerSolverOptions& opts = {}) {
  Vec sum = Vec::Zero(state.x.size());
  for (int j : g.neighbors(state.id)) {
    auto it = neighbor_x.find(j);
    if (it == neighbor_x.end()) {
      throw ProtocolError("x update missing state of neighbor " + std::to_string(j));
    }
    sum += sched.rho_at(g, state.id, j) * (it->second - state.x);
  }
  return x_update_from_sum(state, sum, obj, opts);
}

// ---------------------------------------------------------------------------
// Condition checkers
// ---------------------------------------------------------------------------

struct ConditionAReport {
  bool ok = true;
  std::optional<int> first_violation;  // index into the sequence
};

/// Condition A: 0 < rho^0 <= rho^k <= rho^{k+1} <= rho_bar, entrywise
/// (the matrices are diagonal, so entrywise and Loewner order coincide).
inline ConditionAReport check_condition_A(const std::vector<std::vector<double>>& rho_sequence,
                                          const std::vector<double>& rho_bar) {
  ConditionAReport report;
  for (std::size_t k = 0; k < rho_sequence.size(); ++k) {
    const auto& step = rho_sequence[k];
    for (std::size_t m = 0; m < step.size(); ++m) {
      const bool positive = step[m] > 0.0;
      const bool monotone = k == 0 || step[m] >= rho_sequence[k - 1][m];
      const bool bounded = step[m] <= rho_bar[m];
      if (!(positive && monotone && bounded)) {
        return {false, static_cast<int>(k)};
      }
    }
  }
  return report;
}

struct ConditionBReport {
  bool ok = false;
  double min_eigenvalue = 0.0;
};

/// Condition B: Q_P + Q_C > A^T rho_bar A with Q_C = I (forced by the
/// rho_{i,i} formula). Checked by the smallest eigenvalue of the symmetric
/// matrix diag(gamma_i + 1) - A^T rho_bar A at D = 1; the Kronecker factor
/// I_D leaves the spectrum unchanged.
inline ConditionBReport check_condition_B(const std::vector<double>& gammas, const Graph& g,
                                          double rho_bar) {
  const int n = g.agent_count();
  Mat m = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = gammas.at(i) + 1.0;
  for (const auto& e : g.edges()) {
    m(e.i - 1, e.i - 1) -= rho_bar;
    m(e.j - 1, e.j - 1) -= rho_bar;
    m(e.i - 1, e.j - 1) += rho_bar;
    m(e.j - 1, e.i - 1) += rho_bar;
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(m);
  const double lambda_min = eig.eigenvalues().minCoeff();
  return {lambda_min > 0.0, lambda_min};
}

// ---------------------------------------------------------------------------
// Metrics and diagnostics
// ---------------------------------------------------------------------------

/// d = sum_i sum_k ||x_i^k - x*||^2 / (N*M) over M runs of N agents.
inline double error_metric_d(const std::vector<std::vector<Vec>>& runs, const Vec& optimum) {
  if (runs.empty()) throw DomainError("error metric needs at least one run");
  double total = 0.0;
  std::size_t agents = runs.front().size();
  for (const auto& run : runs) {
    for (const Vec& xi : run) total += (xi - optimum).squaredNorm();
  }
  return total / (static_cast<double>(agents) * static_cast<double>(runs.size()));
}

/// Exact saddle multiplier for quadratic problems: the minimum-norm solution
/// of A^T lambda = -grad f(x*) at the analytic optimum.
inline Vec saddle_multiplier(const Problem& pb) {
  if (!pb.quadratic) throw DomainError("saddle multiplier needs a quadratic objective");
  const Graph& g = pb.graph;
  Vec y_star = problem::analytic_optimum(*pb.quadratic);
  Vec grad(g.agent_count() * g.dimension());
  for (int i = 1; i <= g.agent_count(); ++i) {
    grad.segment((i - 1) * g.dimension(), g.dimension()) = pb.objective->gradient(i, y_star);
  }
  Mat at = problem::build_incidence(g).dense.transpose();
  return at.completeOrthogonalDecomposition().solve(-grad);
}

struct RateDiagnostic {
  double slope = 0.0;
  std::vector<double> gap;  // g(t) for t = 0..T-1, indexed by ergodic step
};

/// Ergodic-gap diagnostic for the O(1/t) rate: computes
/// g(t) = f(xbar^{t+1}) + lambda*^T A xbar^{t+1} - f(x*) with
/// xbar^{t+1} = (1/(t+1)) sum_{k=0}^{t} x^{k+1}, then fits the slope of
/// log g against log t over the second half of the run. Non-positive gaps
/// (numerical noise near machine precision) are dropped from the fit.
inline RateDiagnostic convergence_rate_diagnostic(const Trace& trace, const Problem& pb,
                                                  std::optional<Vec> lambda_star = std::nullopt) {
  if (!pb.quadratic) throw DomainError("rate diagnostic needs a quadratic objective");
  if (trace.size() < 4) throw DomainError("rate diagnostic needs a longer trace");
  const Graph& g = pb.graph;
  Vec y_star = problem::analytic_optimum(*pb.quadratic);
  std::vector<Vec> x_star_vec(g.agent_count(), y_star);
  const double f_star = pb.global_value(x_star_vec);
  Vec lam = lambda_star ? *lambda_star : stack_lambda(trace.back(), g);
  Mat a = problem::build_incidence(g).dense;

  RateDiagnostic out;
  std::vector<Vec> avg(g.agent_count(), Vec::Zero(g.dimension()));
  for (int t = 0; t + 1 < trace.size(); ++t) {
    const auto& rec = trace.iterations[t + 1];  // x^{t+1}
    for (int i = 0; i < g.agent_count(); ++i) {
      avg[i] = (avg[i] * t + rec.x[i]) / (t + 1);
    }
    const double gap = pb.global_value(avg) + lam.dot(a * stack_states(avg)) - f_star;
    out.gap.push_back(gap);
  }

  const int total = static_cast<int>(out.gap.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (int t = total / 2; t < total; ++t) {
    if (!(out.gap[t] > 0)) continue;
    const double lx = std::log(static_cast<double>(t + 1));
    const double ly = std::log(out.gap[t]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++count;
  }
  if (count < 2) throw DomainError("not enough positive gaps to fit a slope");
  out.slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  return out;
}

struct InequalityReport {
  double max_slack = -std::numeric_limits<double>::infinity();
  int worst_transition = -1;
};

/// Per-iteration check of the contraction inequality the convergence
/// analysis rests on:
///   ||l^{k+1}-l*||^2_{(rho^{k+1})^-1} + ||x^{k+1}-x*||^2_Qbar
///     <= ||l^k-l*||^2_{(rho^k)^-1} + ||x^k-x*||^2_Qbar
///        - (||Ax^{k+1}||^2_{rho^k} + ||x^{k+1}-x^k||^2_{Qbar - A^T rho^k A})
///        + ||Ax^{k+1}||^2_{rho^{k+1}} - ||Ax^k||^2_{rho^k}
/// with Qbar = Q_P + I. Reports the largest LHS - RHS over the run.
inline InequalityReport contraction_monitor(const Trace& trace, const Problem& pb,
                                         const std::vector<double>& gammas, const Vec& x_star,
                                         const Vec& lambda_star) {
  const Graph& g = pb.graph;
  const int d = g.dimension();
  Mat a = problem::build_incidence(g).dense;
  Vec qbar(g.agent_count() * d);
  for (int i = 0; i < g.agent_count(); ++i) {
    qbar.segment(i * d, d).setConstant(gammas.at(i) + 1.0);
  }
  auto weighted_sq = [](const Vec& v, const Vec& w) { return v.cwiseProduct(w).dot(v); };

  InequalityReport report;
  for (int k = 0; k + 1 < trace.size(); ++k) {
    const auto& cur = trace.iterations[k];
    const auto& nxt = trace.iterations[k + 1];
    Vec rho_k = rho_diagonal(cur.rho, d);
    Vec rho_k1 = rho_diagonal(nxt.rho, d);
    Vec inv_k = rho_k.cwiseInverse();
    Vec inv_k1 = rho_k1.cwiseInverse();
    Vec xk = stack_states(cur.x), xk1 = stack_states(nxt.x);
    Vec lk = stack_lambda(cur, g), lk1 = stack_lambda(nxt, g);
    Vec axk = a * xk, axk1 = a * xk1;
    Vec dx = xk1 - xk;

    const double lhs = weighted_sq(lk1 - lambda_star, inv_k1) +
                       weighted_sq(xk1 - x_star, qbar);
    const double rhs = weighted_sq(lk - lambda_star, inv_k) +
                       weighted_sq(xk - x_star, qbar) -
                       (weighted_sq(axk1, rho_k) +
                        (weighted_sq(dx, qbar) - weighted_sq(a * dx, rho_k))) +
                       weighted_sq(axk1, rho_k1) - weighted_sq(axk, rho_k);
    const double slack = lhs - rhs;
    if (slack > report.max_slack) {
      report.max_slack = slack;
      report.worst_transition = k;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Plaintext driver
// ---------------------------------------------------------------------------

namespace detail {

/// Sets up agent state and hands back the still-live per-agent schedule
/// streams, positioned right after the initialization draws. Plaintext and
/// encrypted runs go through this same path, which is what makes their b and
/// gamma sequences identical under one seed.
inline std::vector<AgentState> init_agents(const Problem& pb, const RunConfig& cfg,
                                           std::vector<Rng>& sched_rngs) {
  const Graph& g = pb.graph;
  std::vector<AgentState> agents(g.agent_count());
  sched_rngs.clear();
  for (int i = 1; i <= g.agent_count(); ++i) {
    AgentState& st = agents[i - 1];
    st.id = i;
    st.x = cfg.x0 ? (*cfg.x0)[i - 1] : Vec::Zero(g.dimension());
    Rng rng = Rng::derive(cfg.seed, Rng::Stream::kSchedule, static_cast<std::uint64_t>(i));
    st.gamma = cfg.gamma.kind == GammaPolicy::Kind::kFixed
                   ? cfg.gamma.value
                   : gamma_select(g.agent_count(), cfg.b_bar, cfg.gamma.cap, rng);
    init_b_factors(st, g, cfg.b_bar, rng);
    sched_rngs.push_back(rng);
  }
  return agents;
}

inline void check_conditions_or_throw(const Problem& pb, const RunConfig& cfg,
                                      const std::vector<AgentState>& agents) {
  std::vector<double> gammas;
  for (const auto& st : agents) gammas.push_back(st.gamma);
  auto report = check_condition_B(gammas, pb.graph, cfg.b_bar * cfg.b_bar);
  if (!report.ok) {
    throw ConfigError("Condition B fails: smallest eigenvalue " +
                      std::to_string(report.min_eigenvalue));
  }
}

/// Custom objectives must pass the finite-difference gradient check before a
/// run admits them. The quadratic family is exempt: its gradient is the
/// closed form the check would be compared against anyway.
inline void gate_objective(const Problem& pb, const RunConfig& cfg) {
  if (pb.quadratic) return;
  const int d = pb.graph.dimension();
  for (int i = 1; i <= pb.graph.agent_count(); ++i) {
    Vec base = cfg.x0 ? (*cfg.x0)[i - 1] : Vec::Zero(d);
    for (double shift : {0.0, 0.75, -1.25}) {
      Vec probe = base.array() + shift;
      if (!problem::check_gradient(*pb.objective, i, probe)) {
        throw ConfigError("objective of agent " + std::to_string(i) +
                          " fails the finite-difference gradient check");
      }
    }
  }
}

inline double objective_gap(const Problem& pb, const std::vector<Vec>& x) {
  if (!pb.quadratic) return std::numeric_limits<double>::quiet_NaN();
  Vec y_star = problem::analytic_optimum(*pb.quadratic);
  std::vector<Vec> star(pb.graph.agent_count(), y_star);
  return pb.global_value(x) - pb.global_value(star);
}

inline void guard_divergence(const std::vector<AgentState>& agents, double bound) {
  for (const auto& st : agents) {
    if (st.x.lpNorm<Eigen::Infinity>() > bound) {
      throw SolverError("divergence detector tripped: ||x_" + std::to_string(st.id) +
                        "||_inf exceeds " + std::to_string(bound));
    }
  }
}

}  // namespace detail

/// The plaintext solver in lockstep rounds: exchange states and penalty proposals,
/// reconcile rho by min, update lambda, update x in parallel from the round
/// snapshot, then advance the randomized schedule. Stops on max iterations or
/// when max_i ||x_i^{t+1} - x_i^t||_inf stays below the tolerance for
/// stop_window consecutive iterations.
inline Trace run_plaintext(const Problem& pb, const RunConfig& cfg) {
  cfg.validate_common(pb);
  detail::gate_objective(pb, cfg);
  const Graph& g = pb.graph;
  std::vector<Rng> sched_rngs;
  std::vector<AgentState> agents = detail::init_agents(pb, cfg, sched_rngs);
  if (!cfg.waive_condition_checks) detail::check_conditions_or_throw(pb, cfg, agents);

  PenaltySchedule sched = compose_schedule(g, agents, cfg.b_bar, cfg.gamma.cap);
  std::vector<double> prev_rho = sched.rho;

  Trace trace;
  auto snapshot_x = [&]() {
    std::vector<Vec> xs;
    for (const auto& st : agents) xs.push_back(st.x);
    return xs;
  };
  auto record = [&](const PenaltySchedule& s, double millis) {
    IterationRecord rec;
    rec.x = snapshot_x();
    rec.rho = s.rho;
    for (const auto& st : agents) {
      for (const auto& [j, l] : st.lambda_edge) rec.lambda[{st.id, j}] = l;
    }
    rec.residual = consensus_residual(g, rec.x);
    rec.objective_gap = detail::objective_gap(pb, rec.x);
    rec.millis = millis;
    trace.iterations.push_back(std::move(rec));
  };

  // t = 0: lambda_{i,j}^0 = rho^0 (x_i^0 - x_j^0)
  {
    std::vector<Vec> xs = snapshot_x();
    for (auto& st : agents) {
      std::map<int, Vec> neighbor_x;
      for (int j : g.neighbors(st.id)) neighbor_x[j] = xs[j - 1];
      st = lambda_update(std::move(st), neighbor_x, g, sched, 0);
    }
    record(sched, 0.0);
  }

  int streak = 0;
  for (int t = 0; t < cfg.max_iterations; ++t) {
    const auto started = std::chrono::steady_clock::now();
    std::vector<Vec> xs = snapshot_x();

    // Jacobian x-update from the round snapshot.
    double max_delta = 0.0;
    for (auto& st : agents) {
      std::map<int, Vec> neighbor_x;
      for (int j : g.neighbors(st.id)) neighbor_x[j] = xs[j - 1];
      Vec x_next = x_update(st, neighbor_x, g, sched, *pb.objective);
      max_delta = std::max(max_delta, (x_next - st.x).lpNorm<Eigen::Infinity>());
      st.x = std::move(x_next);
    }
    detail::guard_divergence(agents, cfg.divergence_bound);

    // Advance the schedule, re-compose rho, monitor Condition A online.
    for (auto& st : agents) advance_b_factors(st, sched_rngs[st.id - 1]);
    sched = compose_schedule(g, agents, cfg.b_bar, cfg.gamma.cap);
    if (!cfg.waive_condition_checks) {
      auto a_report = check_condition_A({prev_rho, sched.rho},
                                        std::vector<double>(sched.rho.size(), cfg.b_bar * cfg.b_bar));
      if (!a_report.ok) throw SolverError("Condition A violated while advancing the schedule");
    }
    prev_rho = sched.rho;

    // lambda update of the new round.
    std::vector<Vec> xs_next = snapshot_x();
    for (auto& st : agents) {
      std::map<int, Vec> neighbor_x;
      for (int j : g.neighbors(st.id)) neighbor_x[j] = xs_next[j - 1];
      st = lambda_update(std::move(st), neighbor_x, g, sched, t + 1);
    }

    const double millis = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - started)
                              .count();
    record(sched, millis);

    if (cfg.stop_tolerance > 0) {
      streak = max_delta < cfg.stop_tolerance ? streak + 1 : 0;
      if (streak >= cfg.stop_window) break;
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Trace export
// ---------------------------------------------------------------------------

/// CSV with one row per (iteration, agent, dimension). Formatting is fixed so
/// that identical runs produce byte-identical files.
inline std::string trace_to_csv(const Trace& trace) {
  std::string out = "iteration, agent, dim, x, residual, objective_gap\n";
  char buf[512];
  for (int t = 0; t < trace.size(); ++t) {
    const auto& rec = trace.iterations[t];
    for (std::size_t i = 0; i < rec.x.size(); ++i) {
      for (int k = 0; k < rec.x[i].size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%d, %zu, %d, %.17g, %.17g, %.17g\n", t, i + 1, k,
                      rec.x[i][k], rec.residual, rec.objective_gap);
        out += buf;
      }
    }
  }
  return out;
}

}  // namespace ppdo::admm
