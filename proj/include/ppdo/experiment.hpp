#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppdo/admm.hpp"
#include "ppdo/adversary.hpp"
#include "ppdo/errors.hpp"
#include "ppdo/paillier.hpp"
#include "ppdo/presets.hpp"
#include "ppdo/problem.hpp"
#include "ppdo/protocol.hpp"
#include "ppdo/transport.hpp"

namespace ppdo::experiment {

using nlohmann::json;
using problem::Problem;

enum class Mode { kPlaintext, kEncrypted };

inline Mode mode_from_string(const std::string& s) {
  if (s == "plaintext") return Mode::kPlaintext;
  if (s == "encrypted") return Mode::kEncrypted;
  throw ConfigError("mode must be 'plaintext' or 'encrypted', got '" + s + "'");
}

struct ExperimentConfig {
  Problem problem;
  Mode mode = Mode::kPlaintext;
  admm::RunConfig run;
  std::optional<Vec> expected_optimum;
  double check_tolerance = 1e-8;  // on the d metric, used by --check
  std::string out_dir;
  int trials = 2000;  // adversary study

  explicit ExperimentConfig(Problem pb) : problem(std::move(pb)) {}

  static ExperimentConfig from_preset(const std::string& name) {
    presets::Preset preset = presets::by_name(name);
    ExperimentConfig cfg(std::move(preset.problem));
    cfg.expected_optimum = preset.expected_optimum;
    return cfg;
  }

  static ExperimentConfig from_json(const json& doc) {
    ExperimentConfig cfg = [&] {
      if (doc.contains("preset")) return from_preset(doc.at("preset").get<std::string>());
      return ExperimentConfig(problem::load_problem(doc.at("problem")));
    }();
    if (doc.contains("mode")) cfg.mode = mode_from_string(doc.at("mode").get<std::string>());
    if (doc.contains("seed")) cfg.run.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("iterations")) cfg.run.max_iterations = doc.at("iterations").get<int>();
    if (doc.contains("tolerance")) cfg.run.stop_tolerance = doc.at("tolerance").get<double>();
    if (doc.contains("stop_window")) cfg.run.stop_window = doc.at("stop_window").get<int>();
    if (doc.contains("b_bar")) cfg.run.b_bar = doc.at("b_bar").get<double>();
    if (doc.contains("key_bits")) cfg.run.key_bits = doc.at("key_bits").get<unsigned>();
    if (doc.contains("n_max")) cfg.run.codec.n_max = doc.at("n_max").get<std::uint64_t>();
    if (doc.contains("word_bits")) cfg.run.codec.word_bits = doc.at("word_bits").get<unsigned>();
    if (doc.contains("strict_reannounce")) {
      cfg.run.strict_reannounce = doc.at("strict_reannounce").get<bool>();
    }
    if (doc.contains("gamma")) {
      const auto& gp = doc.at("gamma");
      if (gp.contains("fixed")) {
        cfg.run.gamma = admm::GammaPolicy::fixed(gp.at("fixed").get<double>());
      } else {
        cfg.run.gamma = admm::GammaPolicy::sampled(gp.at("cap").get<double>());
      }
    }
    if (doc.contains("x0")) {
      std::vector<Vec> x0;
      for (const auto& row : doc.at("x0")) {
        auto values = row.get<std::vector<double>>();
        x0.push_back(Eigen::Map<Vec>(values.data(), static_cast<int>(values.size())));
      }
      cfg.run.x0 = std::move(x0);
    }
    if (doc.contains("trials")) cfg.trials = doc.at("trials").get<int>();
    if (doc.contains("check_tolerance")) {
      cfg.check_tolerance = doc.at("check_tolerance").get<double>();
    }
    return cfg;
  }

  /// Collects every violation rather than stopping at the first.
  std::vector<std::string> validate() const {
    std::vector<std::string> faults;
    try {
      run.validate_common(problem);
    } catch (const ConfigError& e) {
      faults.push_back(e.what());
    }
    if (mode == Mode::kEncrypted) {
      if (run.key_bits < 64) faults.push_back("encrypted mode requires key_bits >= 64");
      try {
        protocol::validate_key_codec_headroom(run.key_bits, run.codec, run.b_bar);
      } catch (const ConfigError& e) {
        faults.push_back(e.what());
      }
      if (problem.quadratic) {
        double max_state = 0.0;
        for (int i = 1; i <= problem.graph.agent_count(); ++i) {
          max_state = std::max(max_state,
                               problem.quadratic->theta(i).lpNorm<Eigen::Infinity>());
        }
        try {
          codec::encode_real(run.codec, 4.0 * max_state + 1.0);
        } catch (const EncodeError&) {
          faults.push_back("n_max * max-state does not fit the codec word");
        }
      }
    }
    return faults;
  }
};

struct ExperimentResult {
  admm::Trace trace;
  json metrics;
  bool check_passed = true;
};

/// Runs one experiment end to end and assembles the metrics report:
/// final d, iterations, timing, and (when it can be fitted) the ergodic-gap
/// slope.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (auto faults = cfg.validate(); !faults.empty()) {
    std::string all;
    for (const auto& f : faults) all += (all.empty() ? "" : "; ") + f;
    throw ConfigError(all);
  }

  ExperimentResult result;
  const auto started = std::chrono::steady_clock::now();
  if (cfg.mode == Mode::kPlaintext) {
    result.trace = admm::run_plaintext(cfg.problem, cfg.run);
  } else {
    transport::SimTransport net;
    result.trace = protocol::run_encrypted(cfg.problem, cfg.run, net);
  }
  const double wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - started)
                             .count();

  json metrics;
  metrics["mode"] = cfg.mode == Mode::kPlaintext ? "plaintext" : "encrypted";
  metrics["iterations"] = result.trace.size() - 1;
  metrics["wall_ms"] = wall_ms;
  metrics["final_residual"] = result.trace.back().residual;

  double mean_ms = 0.0;
  for (const auto& rec : result.trace.iterations) mean_ms += rec.millis;
  metrics["mean_iteration_ms"] = mean_ms / result.trace.size();

  if (cfg.problem.quadratic) {
    const Vec opt = problem::analytic_optimum(*cfg.problem.quadratic);
    const double d = admm::error_metric_d({result.trace.back().x}, opt);
    metrics["final_d"] = d;
    metrics["optimum"] = std::vector<double>(opt.data(), opt.data() + opt.size());
    if (result.trace.size() >= 16) {
      try {
        metrics["rate_slope"] = admm::convergence_rate_diagnostic(result.trace, cfg.problem).slope;
      } catch (const Error&) {
        metrics["rate_slope"] = nullptr;
      }
    }
    if (cfg.expected_optimum) {
      const double d_expected =
          admm::error_metric_d({result.trace.back().x}, *cfg.expected_optimum);
      metrics["final_d_vs_expected"] = d_expected;
      result.check_passed = d_expected <= cfg.check_tolerance;
    }
  }
  metrics["check_passed"] = result.check_passed;
  result.metrics = std::move(metrics);

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream trace_file(cfg.out_dir + "/trace.csv", std::ios::binary);
    trace_file << admm::trace_to_csv(result.trace);
    std::ofstream metrics_file(cfg.out_dir + "/metrics.json");
    metrics_file << result.metrics.dump(2) << "\n";
  }
  return result;
}

struct AdversaryStudyResult {
  adversary::StudyResult study;
  json summary;
};

/// Full adversary pipeline: run the two-agent problem, replay the adversary's
/// view, estimate over cfg.trials hypotheses, and summarize the spreads.
inline AdversaryStudyResult run_adversary_study(const ExperimentConfig& cfg) {
  if (cfg.problem.graph.agent_count() != 2) {
    throw ConfigError("the adversary study needs a two-agent problem");
  }
  ExperimentConfig run_cfg = cfg;
  run_cfg.out_dir.clear();
  ExperimentResult run = run_experiment(run_cfg);

  // Agent 2 is the curious party, agent 1 the target.
  adversary::AdversaryView view =
      adversary::view_from_run(cfg.problem, cfg.run, run.trace, 2, 1);
  Rng rng = Rng::derive(cfg.run.seed, Rng::Stream::kMisc, 0xadu);
  AdversaryStudyResult out{adversary::run_estimation_trials(view, cfg.trials, rng), {}};

  const auto& summary = out.study.summary;
  out.summary["trials"] = cfg.trials;
  out.summary["iterations"] = static_cast<int>(view.y.size());
  out.summary["x_hat_spread"] = summary.x_hat_spread;
  out.summary["slope_spread"] = summary.slope_spread;
  out.summary["max_minimizer_deviation"] = summary.max_minimizer_deviation;
  out.summary["max_equation_residual"] = summary.max_equation_residual;
  out.summary["consensus"] = std::vector<double>(view.x_star.data(),
                                                 view.x_star.data() + view.x_star.size());

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream csv(cfg.out_dir + "/trials.csv", std::ios::binary);
    csv << "trial, iteration, x_hat, grad_hat\n";
    char buf[256];
    for (std::size_t trial = 0; trial < out.study.trials.size(); ++trial) {
      const auto& t = out.study.trials[trial];
      for (std::size_t k = 0; k < t.x_hat.size(); ++k) {
        const double grad = k > 0 ? t.grad_hat[k - 1][0] : std::nan("");
        std::snprintf(buf, sizeof(buf), "%zu, %zu, %.17g, %.17g\n", trial, k, t.x_hat[k][0], grad);
        csv << buf;
      }
    }
    std::ofstream summary_file(cfg.out_dir + "/summary.json");
    summary_file << out.summary.dump(2) << "\n";
  }
  return out;
}

struct BenchReport {
  unsigned key_bits = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
};

/// Agent-side cost of one neighbor exchange at one iteration: encrypt the
/// own state, decrypt the weighted reply. Reported per key size.
inline std::vector<BenchReport> bench_crypto(const std::vector<unsigned>& key_sizes,
                                             int repetitions = 200,
                                             std::uint64_t seed = 7) {
  std::vector<BenchReport> reports;
  codec::CodecConfig codec;
  for (unsigned bits : key_sizes) {
    Rng rng = Rng::derive(seed, Rng::Stream::kCrypto, bits);
    paillier::KeyPair keys = paillier::generate_keys(bits, rng);
    // A reply-like ciphertext: weighted encrypted difference.
    const auto slot = codec::encode_real(codec, 1.234567);
    std::vector<double> samples;
    samples.reserve(repetitions);
    for (int rep = 0; rep < repetitions; ++rep) {
      const auto started = std::chrono::steady_clock::now();
      paillier::Ciphertext c = paillier::encrypt(
          keys.pk, mpz_class{static_cast<unsigned long>(slot.slot)}, rng);
      paillier::Ciphertext weighted = paillier::hom_scale(keys.pk, c, std::uint64_t{650000});
      mpz_class raw = paillier::decrypt(keys.sk, keys.pk, weighted);
      (void)raw;
      samples.push_back(std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - started)
                            .count());
    }
    std::sort(samples.begin(), samples.end());
    BenchReport report;
    report.key_bits = bits;
    report.median_ms = samples[samples.size() / 2];
    report.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size();
    reports.push_back(report);
  }
  return reports;
}

}  // namespace ppdo::experiment
