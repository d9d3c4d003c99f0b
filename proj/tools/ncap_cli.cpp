// ncap: run capacity-estimation sweeps from a JSON config.
//
//   ncap run <config> [--seed N] [--out-dir DIR] [--rounds R]
//   ncap validate <config>
//   ncap reference <channel> <snr_db> [--noise-variance V]

#include "ncap/experiment.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

namespace {

void print_cell(const ncap::CellResult& cell) {
  std::cout << std::setw(8) << ncap::format_number(cell.snr_db) << " dB  " << std::setw(14)
            << cell.estimator << "  ";
  if (cell.completed) {
    std::cout << "mean " << ncap::format_number(cell.estimate.mean) << " nats  var "
              << ncap::format_number(cell.estimate.variance) << "  rounds "
              << cell.estimate.completed() << (cell.estimate.converged ? "" : "  (not converged)");
  } else {
    std::cout << "FAILED: " << cell.error;
  }
  std::cout << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural channel capacity estimation"};
  app.require_subcommand(1);

  std::string config_path;
  ncap::ConfigOverrides overrides;
  std::uint64_t seed = 0;
  std::string out_dir;
  int rounds = 0;

  CLI::App* run = app.add_subcommand("run", "Run every (SNR, estimator) cell of a config");
  run->add_option("config", config_path, "JSON config file")->required();
  CLI::Option* seed_opt = run->add_option("--seed", seed, "Override train.seed");
  CLI::Option* dir_opt = run->add_option("--out-dir", out_dir, "Override outputs.dir");
  CLI::Option* rounds_opt =
      run->add_option("--rounds", rounds, "Override train.rounds")->check(CLI::PositiveNumber);

  CLI::App* validate = app.add_subcommand("validate", "Check a config and print applied defaults");
  validate->add_option("config", config_path, "JSON config file")->required();

  std::string channel_name;
  double snr_db = 0.0;
  double noise_variance = 1.0;
  CLI::App* reference = app.add_subcommand("reference", "Print reference capacities");
  reference->add_option("channel", channel_name, "awgn, optical or peak_awgn")->required();
  reference->add_option("snr_db", snr_db, "SNR in dB")->required();
  reference->add_option("--noise-variance", noise_variance, "Noise variance")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  if (*reference) {
    try {
      const ncap::ChannelKind kind = ncap::parse_channel_kind(channel_name);
      const ncap::ReferenceValues ref = ncap::reference_values(kind, snr_db, noise_variance);
      std::cout << std::setprecision(6);
      std::cout << "channel " << ncap::to_string(kind) << ", SNR " << snr_db << " dB, noise variance "
                << noise_variance << '\n';
      if (ref.closed_form) std::cout << "closed form:      " << *ref.closed_form << " nats\n";
      if (ref.blahut_arimoto) {
        std::cout << "Blahut-Arimoto:   " << *ref.blahut_arimoto << " nats ("
                  << ncap::kReferenceInputs << " inputs, " << ncap::kReferenceOutputs
                  << " output bins)\n";
      }
      if (ref.bounds) {
        std::cout << "published bounds: [" << ref.bounds->lower << ", " << ref.bounds->upper
                  << "] nats\n";
      }
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return ncap::kExitConfig;
    }
  }

  ncap::ExperimentConfig config;
  try {
    config = ncap::load_config(config_path);
    if (*seed_opt) overrides.seed = seed;
    if (*dir_opt) overrides.out_dir = out_dir;
    if (*rounds_opt) overrides.rounds = rounds;
    ncap::apply_overrides(config, overrides);
  } catch (const ncap::ConfigError& e) {
    std::cerr << config_path << ": " << e.what() << '\n';
    return ncap::kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << config_path << ": " << e.what() << '\n';
    return ncap::kExitConfig;
  }

  if (*validate) {
    std::cout << config_path << ": ok, " << config.snr_db_list.size() * config.estimators.size()
              << " cells\n";
    for (const auto& [key, value] : config.applied_defaults) {
      std::cout << "  default " << key << " = " << value << '\n';
    }
    return 0;
  }

  std::cout << "writing to " << config.out_dir.string() << std::endl;
  try {
    return ncap::run_experiment(config, print_cell);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ncap::kExitFailed;
  }
}
