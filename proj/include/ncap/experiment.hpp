#pragma once

// Config-driven sweeps over (SNR, estimator) cells and their file outputs.

#include "ncap/capacity.hpp"
#include "ncap/reference.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncap {

/// Config rejected by validate_config. Each entry of errors() names the
/// offending field and, when it can be located, the line in the source text.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

struct EstimatorEntry {
  EstimatorSpec spec;
  TrainConfig train;  // global train block plus this entry's overrides
  std::string label;  // method name, or the entry's "label" field
};

struct ExperimentConfig {
  ChannelKind channel = ChannelKind::awgn;
  double noise_variance = 1.0;
  std::vector<double> snr_db_list;
  std::vector<EstimatorEntry> estimators;
  std::filesystem::path out_dir = "results";
  int histogram_bins = 100;
  int histogram_samples = 100000;
  bool write_traces = true;
  bool write_histograms = true;
  // Every default that was filled in, keyed by its dotted path.
  std::map<std::string, std::string> applied_defaults;
};

/// Parses and checks a JSON config. Unknown keys are errors. Throws
/// ConfigError listing every problem found.
ExperimentConfig validate_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Command-line overrides applied after validation.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<int> rounds;
};
void apply_overrides(ExperimentConfig& config, const ConfigOverrides& overrides);

struct CellResult {
  double snr_db = 0.0;
  std::string estimator;
  bool completed = false;
  std::string error;
  CapacityEstimate estimate;
};

/// Reference capacities for one (channel, SNR): the closed form on AWGN, a
/// Blahut-Arimoto value on a kReferenceInputs x kReferenceOutputs grid for
/// the other channels, and published bounds where they exist.
struct ReferenceValues {
  std::optional<double> closed_form;
  std::optional<double> blahut_arimoto;
  std::optional<CapacityBounds> bounds;
};
inline constexpr int kReferenceInputs = 201;
inline constexpr int kReferenceOutputs = 600;
ReferenceValues reference_values(ChannelKind kind, double snr_db, double noise_variance);

/// Exit codes of run_experiment.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPartial = 3;
inline constexpr int kExitFailed = 4;

using CellCallback = std::function<void(const CellResult&)>;

/// Runs every cell and writes results.csv, summary.json, traces/<cell>.csv
/// and histograms/<cell>.csv under out_dir. Returns kExitOk when every cell
/// completed, kExitFailed when every cell failed and kExitPartial otherwise.
int run_experiment(const ExperimentConfig& config, const CellCallback& on_cell = {},
                   std::vector<CellResult>* cells = nullptr);

/// File stem of a cell, e.g. "awgn_20dB_mine".
std::string cell_name(ChannelKind channel, double snr_db, const std::string& estimator);

/// Fixed-format number used in every CSV: 6 significant digits.
std::string format_number(double value);

}  // namespace ncap
