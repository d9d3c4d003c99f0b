#pragma once

// Alternating optimization of an MI estimator (NMIE) and an input
// transformer (NIT):
//   phase 0   - train the estimator alone on samples from the untrained NIT;
//   main loop - per iteration, one estimator ascent step (NIT frozen) and one
//               NIT ascent step (estimator frozen) on the same MI estimate;
//   final     - freeze both and evaluate on fresh samples.
// Independent rounds are aggregated into a mean and unbiased variance.

#include "ncap/channels.hpp"
#include "ncap/estimators.hpp"
#include "ncap/nit.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ncap {

struct TrainConfig {
  int batch_size = 256;
  double lr = 1e-4;  // both networks
  int phase0_iters = 500;
  int max_iters = 20000;
  double grad_clip = 0.2;  // global-norm clip on both networks; 0 disables
  int rounds = 10;
  int convergence_window = 500;
  double convergence_tol = 1e-3;
  std::uint64_t seed = 0;
  Eigen::Index eval_samples = 100000;
  std::vector<int> nit_hidden = {64, 64, 64, 64};
  /// Worker threads for running rounds concurrently.
  int threads = 1;

  void validate() const;
};

/// Everything one round trains: estimator, transformer and their streams.
struct TrainingUnit {
  ChannelSpec channel;
  MiEstimator nmie;
  InputTransformer nit;
  AdamState nit_adam;
  Rng rng;
  // The critics see x / x_scale and z / z_scale, which leaves the mutual
  // information unchanged but keeps their inputs O(1) at any SNR.
  double x_scale = 1.0;
  double z_scale = 1.0;

  TrainingUnit(const ChannelSpec& channel, const ConstraintSpec& constraint,
               const EstimatorSpec& estimator, const TrainConfig& config, std::uint64_t seed);
};

/// Draws a joint batch through the NIT (train mode) and the channel, returned
/// in critic units.
PairBatch draw_joint(TrainingUnit& unit, Eigen::Index n, TransformCache* cache = nullptr);

/// Estimator-only training for config.phase0_iters steps; the NIT is untouched.
void run_phase0(TrainingUnit& unit, const TrainConfig& config);

struct MainLoopResult {
  std::vector<double> trace;
  int iterations = 0;
  int skipped_steps = 0;
  bool converged = false;
  bool aborted = false;
  std::string diagnostic;
};

/// The alternating loop. Stops when consecutive non-overlapping window means
/// differ by less than convergence_tol, at max_iters, or aborts after 50
/// consecutive non-finite or implausible (> ln B + 5) estimates.
MainLoopResult run_main_loop(TrainingUnit& unit, const TrainConfig& config);

/// Freezes the NIT scale on a calibration batch and evaluates the estimator
/// on eval_samples fresh samples.
double final_evaluation(TrainingUnit& unit, const TrainConfig& config);

struct RoundResult {
  int index = 0;
  std::uint64_t seed = 0;
  double estimate = 0.0;           // final evaluation
  double training_estimate = 0.0;  // mean of the last trace window
  bool converged = false;
  bool aborted = false;
  int iterations = 0;
  int skipped_steps = 0;
  double seconds = 0.0;
  std::string diagnostic;
  std::vector<double> trace;
  InputTransformer nit;
};

struct CapacityEstimate {
  std::vector<RoundResult> rounds;  // one per round, in index order
  std::vector<double> per_round;    // final estimates of completed rounds
  double mean = 0.0;
  double variance = 0.0;  // unbiased; 0 with a single completed round
  std::vector<double> trace;  // last completed round
  bool converged = false;     // every completed round converged

  int completed() const { return static_cast<int>(per_round.size()); }
};

/// Seed of round `index`: splitmix64(seed + index).
std::uint64_t round_seed(std::uint64_t seed, int index);

RoundResult run_round(const ChannelSpec& channel, const ConstraintSpec& constraint,
                      const EstimatorSpec& estimator, const TrainConfig& config, int index);

/// Sample mean and unbiased variance.
std::pair<double, double> mean_and_variance(const std::vector<double>& values);

/// Aggregates round results in index order. Throws EstimationFailure when more
/// than half of the rounds aborted.
CapacityEstimate aggregate_rounds(std::vector<RoundResult> rounds);

using RoundCallback = std::function<void(const RoundResult&)>;

CapacityEstimate estimate_capacity(const ChannelSpec& channel, const ConstraintSpec& constraint,
                                   const EstimatorSpec& estimator, const TrainConfig& config,
                                   const RoundCallback& on_round = {});

}  // namespace ncap
