#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <ppdo/ppdo.hpp>

namespace {

using ppdo::experiment::ExperimentConfig;

struct CommonFlags {
  std::string config_path;
  std::string preset;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> key_bits;
  std::optional<int> iterations;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "experiment config JSON");
  cmd->add_option("--preset", flags.preset, "built-in preset name")
      ->check(CLI::IsMember(ppdo::presets::names()));
  cmd->add_option("--mode", flags.mode, "plaintext|encrypted")
      ->check(CLI::IsMember({"plaintext", "encrypted"}));
  cmd->add_option("--seed", flags.seed, "run seed");
  cmd->add_option("--key-bits", flags.key_bits, "Paillier key size");
  cmd->add_option("--iterations", flags.iterations, "iteration budget");
  cmd->add_option("--out", flags.out_dir, "output directory for trace/metrics");
}

ExperimentConfig build_config(const CommonFlags& flags) {
  if (flags.config_path.empty() && flags.preset.empty()) {
    throw ppdo::ConfigError("either --config or --preset is required");
  }
  ExperimentConfig cfg = [&] {
    if (!flags.config_path.empty()) {
      std::ifstream in(flags.config_path);
      if (!in) throw ppdo::ConfigError("cannot open config file " + flags.config_path);
      nlohmann::json doc = nlohmann::json::parse(in);
      return ExperimentConfig::from_json(doc);
    }
    return ExperimentConfig::from_preset(flags.preset);
  }();
  if (!flags.preset.empty() && !flags.config_path.empty()) {
    throw ppdo::ConfigError("--config and --preset are mutually exclusive");
  }
  if (!flags.mode.empty()) cfg.mode = ppdo::experiment::mode_from_string(flags.mode);
  if (flags.seed) cfg.run.seed = *flags.seed;
  if (flags.key_bits) cfg.run.key_bits = *flags.key_bits;
  if (flags.iterations) cfg.run.max_iterations = *flags.iterations;
  cfg.out_dir = flags.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-preserving decentralized consensus optimization toolkit"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  bool check = false;
  CLI::App* run_cmd = app.add_subcommand("run", "run one optimization experiment");
  add_common(run_cmd, run_flags);
  run_cmd->add_flag("--check", check, "fail (exit 3) unless the expected optimum is reached");

  CommonFlags adv_flags;
  int trials = 2000;
  CLI::App* adv_cmd = app.add_subcommand("adversary", "run the estimation-trial study");
  add_common(adv_cmd, adv_flags);
  adv_cmd->add_option("--trials", trials, "number of estimation trials");

  std::vector<unsigned> bench_bits{64, 128, 256, 512};
  CLI::App* bench_cmd = app.add_subcommand("bench", "time per-neighbor crypto cost");
  bench_cmd->add_option("--key-bits", bench_bits, "key sizes to bench");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // flag mistakes are config errors
  }

  try {
    if (run_cmd->parsed()) {
      ExperimentConfig cfg = build_config(run_flags);
      auto result = ppdo::experiment::run_experiment(cfg);
      std::cout << result.metrics.dump(2) << std::endl;
      if (check && !result.check_passed) {
        std::cerr << "check failed: final d exceeds " << cfg.check_tolerance << std::endl;
        return 3;
      }
      return 0;
    }
    if (adv_cmd->parsed()) {
      ExperimentConfig cfg = build_config(adv_flags);
      cfg.trials = trials;
      auto result = ppdo::experiment::run_adversary_study(cfg);
      std::cout << result.summary.dump(2) << std::endl;
      return 0;
    }
    // bench
    auto reports = ppdo::experiment::bench_crypto(bench_bits);
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& r : reports) {
      doc.push_back({{"key_bits", r.key_bits},
                     {"mean_ms", r.mean_ms},
                     {"median_ms", r.median_ms}});
    }
    std::cout << doc.dump(2) << std::endl;
    return 0;
  } catch (const ppdo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime abort: " << e.what() << std::endl;
    return 2;
  }
}
