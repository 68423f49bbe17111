#pragma once

#include <string>
#include <vector>

#include "ppdo/errors.hpp"
#include "ppdo/problem.hpp"

namespace ppdo::presets {

using problem::Edge;
using problem::Graph;
using problem::Problem;

struct Preset {
  std::string name;
  Problem problem;
  Vec expected_optimum;
  std::string notes;
};

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Vec vec1(double a) {
  Vec v(1);
  v << a;
  return v;
}

/// The six-node topology: a ring 1-2-3-4-5-6 plus the chord (1,4), which
/// gives agent 1 the neighbor set {2, 4, 6}. The published experiments fix
/// agent 1's neighbors but not the remaining edges; this is the documented
/// reconstruction used by the fig2 and comparison presets.
inline Graph six_agent_graph(int dimension) {
  return Graph(6, {{1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {1, 6}, {1, 4}}, dimension);
}

/// Six-agent quadratic whose optimum is [38.5; 407/6]. The theta grid is a
/// reconstruction: the published run reports only the optimum, so the
/// per-agent targets are chosen as an evenly spaced grid whose mean (the
/// closed-form optimum for p_i = 2, h_i = 1) equals the published value.
inline Preset fig2() {
  std::vector<Vec> theta;
  for (int i = 1; i <= 6; ++i) {
    theta.push_back(vec2(35.0 + i, (386.0 + 6.0 * i) / 6.0));
  }
  Problem pb = Problem::make_quadratic(six_agent_graph(2), std::vector<double>(6, 1.0),
                                       std::vector<double>(6, 2.0), theta);
  return Preset{"fig2", std::move(pb), vec2(38.5, 407.0 / 6.0),
                "six-agent quadratic, reconstructed theta grid with optimum [38.5; 407/6]"};
}

/// The comparison problem: p_i = 2, h_i = 1,
/// theta_i = [0.1(i-1)+0.1; 0.1(i-1)+0.2], optimum [0.35; 0.45].
inline Preset comparison() {
  std::vector<Vec> theta;
  for (int i = 1; i <= 6; ++i) {
    theta.push_back(vec2(0.1 * (i - 1) + 0.1, 0.1 * (i - 1) + 0.2));
  }
  Problem pb = Problem::make_quadratic(six_agent_graph(2), std::vector<double>(6, 1.0),
                                       std::vector<double>(6, 2.0), theta);
  return Preset{"comparison", std::move(pb), vec2(0.35, 0.45),
                "six-agent comparison problem with optimum [0.35; 0.45]"};
}

/// Two scalar agents; agent 2 plays the honest-but-curious adversary
/// estimating agent 1's objective.
inline Preset two_agent_adversary() {
  Problem pb = Problem::make_quadratic(Graph(2, {{1, 2}}, 1), {1.0, 1.0}, {2.0, 2.0},
                                       {vec1(2.0), vec1(6.0)});
  return Preset{"two-agent-adversary", std::move(pb), vec1(4.0),
                "worst-case two-agent setup for the estimation study"};
}

/// Twelve agents on a cycle, scalar states. The published hardware run
/// reports only the optimum 188.417; the theta grid is chosen to average to
/// it (informational preset).
inline Preset raspberry_analog() {
  std::vector<Edge> edges;
  for (int i = 1; i < 12; ++i) edges.push_back({i, i + 1});
  edges.push_back({1, 12});
  std::vector<Vec> theta;
  for (int i = 1; i <= 12; ++i) theta.push_back(vec1(181.917 + i));
  Problem pb = Problem::make_quadratic(Graph(12, std::move(edges), 1),
                                       std::vector<double>(12, 1.0),
                                       std::vector<double>(12, 2.0), theta);
  return Preset{"raspberry-analog", std::move(pb), vec1(188.417),
                "twelve-agent cycle, reconstructed scalar targets averaging 188.417"};
}

/// Degenerate single agent: no edges, converges to its own minimizer theta.
inline Preset single_agent() {
  Problem pb = Problem::make_quadratic(Graph(1, {}, 1), {1.0}, {2.0}, {vec1(0.7)});
  return Preset{"single-agent", std::move(pb), vec1(0.7), "no neighbors, optimum theta"};
}

/// All agents share one target and start on it, so states never move. Used
/// by the eavesdropper checks: the ciphertext stream must still look fresh.
inline Preset constant_state() {
  std::vector<Vec> theta(6, vec2(1.25, -0.75));
  Problem pb = Problem::make_quadratic(six_agent_graph(2), std::vector<double>(6, 1.0),
                                       std::vector<double>(6, 2.0), theta);
  return Preset{"constant-state", std::move(pb), vec2(1.25, -0.75),
                "identical targets; pair with x0 = optimum for a constant-state run"};
}

inline Preset by_name(const std::string& name) {
  if (name == "fig2") return fig2();
  if (name == "comparison") return comparison();
  if (name == "two-agent-adversary") return two_agent_adversary();
  if (name == "raspberry-analog") return raspberry_analog();
  if (name == "single-agent") return single_agent();
  if (name == "constant-state") return constant_state();
  throw ConfigError("unknown preset: " + name);
}

inline std::vector<std::string> names() {
  return {"fig2",           "comparison",    "two-agent-adversary",
          "raspberry-analog", "single-agent", "constant-state"};
}

}  // namespace ppdo::presets
