// Minimal plaintext run: six agents agree on the minimizer of the sum of
// their private quadratics without any coordinator.

#include <cstdio>

#include <ppdo/ppdo.hpp>

int main() {
  using namespace ppdo;
  auto preset = presets::fig2();

  admm::RunConfig cfg;
  cfg.seed = 1;
  auto trace = admm::run_plaintext(preset.problem, cfg);

  const auto& final = trace.back();
  std::printf("converged after %d iterations, residual %.3g\n", trace.size() - 1,
              final.residual);
  for (std::size_t i = 0; i < final.x.size(); ++i) {
    std::printf("  agent %zu: [%.6f, %.6f]\n", i + 1, final.x[i][0], final.x[i][1]);
  }
  Vec opt = problem::analytic_optimum(*preset.problem.quadratic);
  std::printf("analytic optimum: [%.6f, %.6f]\n", opt[0], opt[1]);
  return 0;
}
