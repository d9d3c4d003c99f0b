#include "ncap/capacity.hpp"

#include "ncap/errors.hpp"

#include <atomic>
#include <exception>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ncap {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
  };
  require(batch_size >= 2, "batch_size must be >= 2");
  require(lr > 0.0, "lr must be > 0");
  require(phase0_iters >= 0, "phase0_iters must be >= 0");
  require(max_iters >= 1, "max_iters must be >= 1");
  require(grad_clip >= 0.0, "grad_clip must be >= 0");
  require(rounds >= 1, "rounds must be >= 1");
  require(convergence_window >= 1, "convergence_window must be >= 1");
  require(convergence_window < max_iters, "convergence_window must be < max_iters");
  require(convergence_tol > 0.0, "convergence_tol must be > 0");
  require(eval_samples >= 2, "eval_samples must be >= 2");
  require(threads >= 1, "threads must be >= 1");
  require(!nit_hidden.empty(), "nit_hidden must be nonempty");
}

TrainingUnit::TrainingUnit(const ChannelSpec& channel_, const ConstraintSpec& constraint,
                           const EstimatorSpec& estimator, const TrainConfig& config,
                           std::uint64_t seed)
    : channel(channel_),
      nmie([&] {
        Rng init = Rng(seed).derive(0);
        return MiEstimator(estimator, 1, 1, init);
      }()),
      nit([&] {
        Rng init = Rng(seed).derive(1);
        return make_input_transformer(constraint, init, config.nit_hidden);
      }()),
      nit_adam(AdamState::for_network(nit.net)),
      rng(Rng(seed).derive(2)),
      x_scale(std::sqrt(constraint.power)),
      z_scale(std::sqrt(constraint.power + channel_.noise_variance)) {
  channel.validate();
}

PairBatch draw_joint(TrainingUnit& unit, Eigen::Index n, TransformCache* cache) {
  const Batch noise = sample_gaussian(unit.rng, n, 1);
  PairBatch joint;
  joint.x = transform(unit.nit, noise, TransformMode::train, cache);
  joint.z = transmit(unit.channel, joint.x, unit.rng);
  joint.x /= unit.x_scale;
  joint.z /= unit.z_scale;
  return joint;
}

void run_phase0(TrainingUnit& unit, const TrainConfig& config) {
  for (int it = 0; it < config.phase0_iters; ++it) {
    const PairBatch joint = draw_joint(unit, config.batch_size);
    try {
      const ObjectiveResult r = unit.nmie.evaluate(joint, unit.rng, false);
      unit.nmie.update(r, config.lr, config.grad_clip);
    } catch (const NumericError&) {
      // Skipped step; phase 0 only warms up the estimator.
    }
  }
}

namespace {

constexpr int kDivergenceStreak = 50;

double window_mean(const std::vector<double>& trace, std::size_t begin, std::size_t end) {
  return std::accumulate(trace.begin() + static_cast<std::ptrdiff_t>(begin),
                         trace.begin() + static_cast<std::ptrdiff_t>(end), 0.0) /
         static_cast<double>(end - begin);
}

}  // namespace

MainLoopResult run_main_loop(TrainingUnit& unit, const TrainConfig& config) {
  MainLoopResult out;
  out.trace.reserve(static_cast<std::size_t>(config.max_iters));
  const double ceiling = std::log(static_cast<double>(config.batch_size)) + 5.0;
  const auto window = static_cast<std::size_t>(config.convergence_window);
  int bad_streak = 0;

  for (int it = 0; it < config.max_iters; ++it) {
    out.iterations = it + 1;
    TransformCache tc;
    const PairBatch joint = draw_joint(unit, config.batch_size, &tc);

    ObjectiveResult r;
    bool ok = true;
    try {
      r = unit.nmie.evaluate(joint, unit.rng, true);
    } catch (const NumericError& e) {
      ok = false;
      out.diagnostic = e.what();
    }
    const double value = ok ? r.estimate : std::nan("");
    out.trace.push_back(value);
    if (!ok || !std::isfinite(value) || value > ceiling) {
      if (++bad_streak >= kDivergenceStreak) {
        std::ostringstream msg;
        msg << "diverged at iteration " << it << ": estimate " << value << " (ceiling "
            << ceiling << ")";
        if (!out.diagnostic.empty()) msg << "; " << out.diagnostic;
        out.aborted = true;
        out.diagnostic = msg.str();
        return out;
      }
      if (!ok) {
        ++out.skipped_steps;
        continue;
      }
    } else {
      bad_streak = 0;
    }

    // Phase 1: estimator step, NIT frozen.
    if (!unit.nmie.update(r, config.lr, config.grad_clip)) ++out.skipped_steps;

    // Phase 2: NIT step on -I, estimator frozen. z = x + n so dI/dx gets both
    // partial derivatives, each mapped back from critic units.
    const Batch grad_x = r.grad_x / unit.x_scale + r.grad_z / unit.z_scale;
    Gradients g = transform_backward(unit.nit, tc, grad_x);
    g *= -1.0;
    try {
      if (config.grad_clip > 0.0) g = clip_gradient_norm(std::move(g), config.grad_clip);
      adam_step(unit.nit.net, g, unit.nit_adam, config.lr);
    } catch (const NumericError&) {
      ++out.skipped_steps;
    }

    if (out.trace.size() % window == 0 && out.trace.size() >= 2 * window) {
      const std::size_t n = out.trace.size();
      const double current = window_mean(out.trace, n - window, n);
      const double previous = window_mean(out.trace, n - 2 * window, n - window);
      if (std::isfinite(current) && std::isfinite(previous) &&
          std::abs(current - previous) < config.convergence_tol) {
        out.converged = true;
        return out;
      }
    }
  }
  return out;
}

double final_evaluation(TrainingUnit& unit, const TrainConfig& config) {
  calibrate(unit.nit, config.eval_samples, unit.rng);
  const Batch noise = sample_gaussian(unit.rng, config.eval_samples, 1);
  PairBatch joint;
  joint.x = transform(unit.nit, noise, TransformMode::eval);
  joint.z = transmit(unit.channel, joint.x, unit.rng);
  joint.x /= unit.x_scale;
  joint.z /= unit.z_scale;
  return unit.nmie.estimate(joint, unit.rng, config.batch_size);
}

std::uint64_t round_seed(std::uint64_t seed, int index) {
  return splitmix64(seed + static_cast<std::uint64_t>(index));
}

RoundResult run_round(const ChannelSpec& channel, const ConstraintSpec& constraint,
                      const EstimatorSpec& estimator, const TrainConfig& config, int index) {
  const auto start = std::chrono::steady_clock::now();
  RoundResult rr;
  rr.index = index;
  rr.seed = round_seed(config.seed, index);

  TrainingUnit unit(channel, constraint, estimator, config, rr.seed);
  run_phase0(unit, config);
  MainLoopResult loop = run_main_loop(unit, config);
  rr.iterations = loop.iterations;
  rr.skipped_steps = loop.skipped_steps;
  rr.converged = loop.converged;
  rr.aborted = loop.aborted;
  rr.diagnostic = loop.diagnostic;

  if (!rr.aborted) {
    const std::size_t w = std::min(loop.trace.size(),
                                   static_cast<std::size_t>(config.convergence_window));
    rr.training_estimate = window_mean(loop.trace, loop.trace.size() - w, loop.trace.size());
    try {
      rr.estimate = final_evaluation(unit, config);
    } catch (const std::runtime_error& e) {
      rr.aborted = true;
      rr.diagnostic = std::string("final evaluation failed: ") + e.what();
    }
  }
  rr.trace = std::move(loop.trace);
  rr.nit = std::move(unit.nit);
  rr.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rr;
}

std::pair<double, double> mean_and_variance(const std::vector<double>& values) {
  if (values.empty()) return {std::nan(""), std::nan("")};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, ss / (n - 1.0)};
}

CapacityEstimate aggregate_rounds(std::vector<RoundResult> rounds) {
  CapacityEstimate est;
  est.rounds = std::move(rounds);
  int aborted = 0;
  est.converged = true;
  for (const RoundResult& r : est.rounds) {
    if (r.aborted) {
      ++aborted;
      continue;
    }
    est.per_round.push_back(r.estimate);
    est.converged = est.converged && r.converged;
    est.trace = r.trace;
  }
  if (2 * aborted > static_cast<int>(est.rounds.size())) {
    std::ostringstream msg;
    msg << aborted << " of " << est.rounds.size() << " rounds aborted:";
    for (const RoundResult& r : est.rounds) {
      if (r.aborted) msg << " [round " << r.index << ": " << r.diagnostic << "]";
    }
    throw EstimationFailure(msg.str());
  }
  std::tie(est.mean, est.variance) = mean_and_variance(est.per_round);
  return est;
}

CapacityEstimate estimate_capacity(const ChannelSpec& channel, const ConstraintSpec& constraint,
                                   const EstimatorSpec& estimator, const TrainConfig& config,
                                   const RoundCallback& on_round) {
  config.validate();
  estimator.validate();
  channel.validate();
  constraint.validate();

  std::vector<RoundResult> results(static_cast<std::size_t>(config.rounds));
  std::mutex callback_mutex;
  std::exception_ptr failure;
  auto work = [&](int index) {
    RoundResult& slot = results[static_cast<std::size_t>(index)];
    try {
      slot = run_round(channel, constraint, estimator, config, index);
    } catch (const std::runtime_error& e) {
      slot.index = index;
      slot.seed = round_seed(config.seed, index);
      slot.aborted = true;
      slot.diagnostic = e.what();
    } catch (...) {
      std::lock_guard<std::mutex> lock(callback_mutex);
      if (!failure) failure = std::current_exception();
      return;
    }
    if (on_round) {
      std::lock_guard<std::mutex> lock(callback_mutex);
      on_round(results[static_cast<std::size_t>(index)]);
    }
  };

  const int workers = std::min(config.threads, config.rounds);
  if (workers <= 1) {
    for (int i = 0; i < config.rounds; ++i) work(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < config.rounds; i = next++) work(i);
      });
    }
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return aggregate_rounds(std::move(results));
}

}  // namespace ncap
