#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ppdo/errors.hpp"

namespace ppdo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace problem {

/// Undirected communication edge; stored with origin < terminus.
struct Edge {
  int i = 0;
  int j = 0;

  friend bool operator==(const Edge& a, const Edge& b) { return a.i == b.i && a.j == b.j; }
  friend auto operator<=>(const Edge& a, const Edge& b) = default;
};

/// The communication graph: agents 1..N, undirected edges, state dimension D.
/// Edge order is lexicographic, which fixes the row order of the incidence
/// matrix and of every stacked per-edge vector.
class Graph {
 public:
  Graph(int agent_count, std::vector<Edge> edges, int dimension)
      : agent_count_(agent_count), edges_(std::move(edges)), dimension_(dimension) {
    validate();
    std::sort(edges_.begin(), edges_.end());
    neighbors_.assign(agent_count_ + 1, {});
    for (const Edge& e : edges_) {
      neighbors_[e.i].push_back(e.j);
      neighbors_[e.j].push_back(e.i);
    }
    for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
  }

  int agent_count() const { return agent_count_; }
  int dimension() const { return dimension_; }
  const std::vector<Edge>& edges() const { return edges_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }

  /// Neighbor ids of agent i (1-based), ascending, excluding i itself.
  const std::vector<int>& neighbors(int i) const { return neighbors_.at(i); }

  int degree(int i) const { return static_cast<int>(neighbors(i).size()); }

  /// Row index of the edge between i and j in the canonical edge order.
  int edge_index(int i, int j) const {
    Edge e{std::min(i, j), std::max(i, j)};
    auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
    if (it == edges_.end() || !(*it == e)) throw DomainError("no such edge");
    return static_cast<int>(it - edges_.begin());
  }

  bool connected() const {
    if (agent_count_ == 1) return true;
    std::vector<bool> seen(agent_count_ + 1, false);
    std::vector<int> stack{1};
    seen[1] = true;
    int visited = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int w : neighbors_[v]) {
        if (!seen[w]) {
          seen[w] = true;
          ++visited;
          stack.push_back(w);
        }
      }
    }
    return visited == agent_count_;
  }

 private:
  void validate() const {
    std::vector<std::string> faults;
    if (agent_count_ < 1) faults.push_back("agent count must be positive");
    if (dimension_ < 1) faults.push_back("dimension must be positive");
    std::set<std::pair<int, int>> seen;
    for (const Edge& e : edges_) {
      if (e.i == e.j) faults.push_back("self-loop on agent " + std::to_string(e.i));
      if (e.i >= e.j) faults.push_back("edge endpoints must satisfy i < j");
      if (e.i < 1 || e.j > agent_count_) {
        faults.push_back("edge endpoint outside [1, N]");
      }
      if (!seen.insert({e.i, e.j}).second) {
        faults.push_back("duplicate edge (" + std::to_string(e.i) + "," + std::to_string(e.j) + ")");
      }
    }
    if (!faults.empty()) {
      std::string all;
      for (const auto& f : faults) all += (all.empty() ? "" : "; ") + f;
      throw ConfigError("invalid graph: " + all);
    }
  }

  int agent_count_;
  std::vector<Edge> edges_;
  int dimension_;
  std::vector<std::vector<int>> neighbors_;
};

/// Edge-node incidence matrix A = [a_{m,n}] (x) I_D: block row m carries +I_D
/// at the origin of edge m and -I_D at its terminus, so Ax stacks the
/// per-edge differences x_i - x_j and Ax = 0 is exactly consensus.
struct IncidenceMatrix {
  Mat dense;  // (|E|*D) x (N*D)
};

inline IncidenceMatrix build_incidence(const Graph& g) {
  if (!g.connected()) {
    throw ConfigError("incidence matrix requires a connected graph");
  }
  const int d = g.dimension();
  Mat a = Mat::Zero(g.edge_count() * d, g.agent_count() * d);
  for (int m = 0; m < g.edge_count(); ++m) {
    const Edge& e = g.edges()[m];
    for (int k = 0; k < d; ++k) {
      a(m * d + k, (e.i - 1) * d + k) = 1.0;
      a(m * d + k, (e.j - 1) * d + k) = -1.0;
    }
  }
  return IncidenceMatrix{std::move(a)};
}

/// Local objective interface. Agents only ever see their own index. The
/// stationarity hook, when provided, solves grad f_i(x) + coeff*x + rhs = 0
/// in closed form; otherwise the solver falls back to an iterative method.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual double value(int agent, const Vec& x) const = 0;
  virtual Vec gradient(int agent, const Vec& x) const = 0;
  virtual std::optional<Vec> solve_stationarity(int agent, double coeff,
                                                const Vec& rhs) const {
    (void)agent, (void)coeff, (void)rhs;
    return std::nullopt;
  }
};

/// f_i(x) = (1/p_i) || h_i x - theta_i ||^2 with p_i > 0.
class QuadraticObjective : public Objective {
 public:
  QuadraticObjective(std::vector<double> h, std::vector<double> p, std::vector<Vec> theta)
      : h_(std::move(h)), p_(std::move(p)), theta_(std::move(theta)) {
    if (h_.size() != p_.size() || h_.size() != theta_.size() || h_.empty()) {
      throw ConfigError("quadratic objective needs equally sized h, p, theta");
    }
    for (double pi : p_) {
      if (!(pi > 0)) throw ConfigError("every p_i must be positive");
    }
  }

  int agent_count() const { return static_cast<int>(h_.size()); }
  double h(int agent) const { return h_.at(agent - 1); }
  double p(int agent) const { return p_.at(agent - 1); }
  const Vec& theta(int agent) const { return theta_.at(agent - 1); }

  double value(int agent, const Vec& x) const override {
    Vec r = h(agent) * x - theta(agent);
    return r.squaredNorm() / p(agent);
  }

  /// grad f_i(x) = (2 h_i / p_i)(h_i x - theta_i)
  Vec gradient(int agent, const Vec& x) const override {
    return (2.0 * h(agent) / p(agent)) * (h(agent) * x - theta(agent));
  }

  std::optional<Vec> solve_stationarity(int agent, double coeff, const Vec& rhs) const override {
    const double a = 2.0 * h(agent) * h(agent) / p(agent) + coeff;
    Vec b = (2.0 * h(agent) / p(agent)) * theta(agent) - rhs;
    return Vec(b / a);
  }

 private:
  std::vector<double> h_;
  std::vector<double> p_;
  std::vector<Vec> theta_;
};

/// Closed-form minimizer of sum_i f_i for the quadratic family:
/// (sum 2 h_i theta_i / p_i) / (sum 2 h_i^2 / p_i).
inline Vec analytic_optimum(const QuadraticObjective& obj) {
  const int n = obj.agent_count();
  const int d = static_cast<int>(obj.theta(1).size());
  Vec numerator = Vec::Zero(d);
  double denominator = 0.0;
  for (int i = 1; i <= n; ++i) {
    numerator += (2.0 * obj.h(i) / obj.p(i)) * obj.theta(i);
    denominator += 2.0 * obj.h(i) * obj.h(i) / obj.p(i);
  }
  if (!(denominator > 0)) throw DomainError("degenerate objective: all h_i are zero");
  return numerator / denominator;
}

/// Central finite differences vs the analytic gradient; gates custom
/// objectives before a run admits them.
inline bool check_gradient(const Objective& obj, int agent, const Vec& x,
                           double rel_tol = 1e-6) {
  const double eps = 1e-6;
  Vec g = obj.gradient(agent, x);
  Vec fd(x.size());
  for (int k = 0; k < x.size(); ++k) {
    Vec hi = x, lo = x;
    hi[k] += eps;
    lo[k] -= eps;
    fd[k] = (obj.value(agent, hi) - obj.value(agent, lo)) / (2 * eps);
  }
  const double scale = std::max(1.0, g.norm());
  return (g - fd).norm() <= rel_tol * scale;
}

/// A complete problem instance: graph plus local objectives. The quadratic
/// payload is kept around when available so closed-form paths (analytic
/// optimum, exact multipliers) stay accessible.
struct Problem {
  Graph graph;
  std::shared_ptr<const Objective> objective;
  std::shared_ptr<const QuadraticObjective> quadratic;  // null for custom objectives

  static Problem make_quadratic(Graph g, std::vector<double> h, std::vector<double> p,
                                std::vector<Vec> theta) {
    auto quad = std::make_shared<QuadraticObjective>(std::move(h), std::move(p), std::move(theta));
    if (quad->agent_count() != g.agent_count()) {
      throw ConfigError("objective size does not match agent count");
    }
    for (int i = 1; i <= g.agent_count(); ++i) {
      if (quad->theta(i).size() != g.dimension()) {
        throw ConfigError("theta dimension does not match graph dimension");
      }
    }
    return Problem{std::move(g), quad, quad};
  }

  double global_value(const std::vector<Vec>& x) const {
    double total = 0.0;
    for (int i = 1; i <= graph.agent_count(); ++i) total += objective->value(i, x[i - 1]);
    return total;
  }
};

inline Problem load_problem(const nlohmann::json& doc) {
  const int agents = doc.at("agents").get<int>();
  const int dimension = doc.at("dimension").get<int>();
  std::vector<Edge> edges;
  for (const auto& e : doc.at("edges")) {
    edges.push_back(Edge{e.at(0).get<int>(), e.at(1).get<int>()});
  }
  const auto& obj = doc.at("objective");
  if (obj.at("type").get<std::string>() != "quadratic") {
    throw ConfigError("unsupported objective type: " + obj.at("type").get<std::string>());
  }
  auto h = obj.at("h").get<std::vector<double>>();
  auto p = obj.at("p").get<std::vector<double>>();
  std::vector<Vec> theta;
  for (const auto& row : obj.at("theta")) {
    auto values = row.get<std::vector<double>>();
    theta.push_back(Eigen::Map<Vec>(values.data(), static_cast<int>(values.size())));
  }
  return Problem::make_quadratic(Graph(agents, std::move(edges), dimension), std::move(h),
                                 std::move(p), std::move(theta));
}

inline nlohmann::json problem_to_json(const Problem& pb) {
  if (!pb.quadratic) throw DomainError("only quadratic problems serialize to JSON");
  nlohmann::json doc;
  doc["agents"] = pb.graph.agent_count();
  doc["dimension"] = pb.graph.dimension();
  auto& edges = doc["edges"] = nlohmann::json::array();
  for (const Edge& e : pb.graph.edges()) edges.push_back({e.i, e.j});
  nlohmann::json obj;
  obj["type"] = "quadratic";
  std::vector<double> h, p;
  auto theta = nlohmann::json::array();
  for (int i = 1; i <= pb.graph.agent_count(); ++i) {
    h.push_back(pb.quadratic->h(i));
    p.push_back(pb.quadratic->p(i));
    const Vec& t = pb.quadratic->theta(i);
    theta.push_back(std::vector<double>(t.data(), t.data() + t.size()));
  }
  obj["h"] = h;
  obj["p"] = p;
  obj["theta"] = theta;
  doc["objective"] = obj;
  return doc;
}

}  // namespace problem
}  // namespace ppdo
