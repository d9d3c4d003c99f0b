// Acceptance run: one PASS/FAIL line per criterion, supporting numbers on
// indented lines. Select a subset with NCAP_ACCEPTANCE_ONLY=1,7,8; outputs
// of the training sweeps go to ./acceptance_out.
//
// Exit status is 0 only when every selected criterion passes.

#include "ncap/errors.hpp"
#include "ncap/experiment.hpp"
#include "ncap/nit.hpp"
#include "ncap/reference.hpp"

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace ncap;
namespace fs = std::filesystem;

namespace {

const fs::path kOutRoot = "acceptance_out";
const fs::path kConfigDir = fs::path(NCAP_SOURCE_DIR) / "configs";

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void detail(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void detail(const char* fmt, ...) {
  std::va_list args;
  va_start(args, fmt);
  std::printf("    ");
  std::vprintf(fmt, args);
  std::printf("\n");
  std::fflush(stdout);
  va_end(args);
}

struct Verdict {
  bool pass = true;
  std::string summary;

  // Records a failed check without stopping the remaining ones.
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!summary.empty()) summary += "; ";
      summary += what;
    }
  }
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// ---------------------------------------------------------------- 1

double contracted(const Network& net, const Batch& x, const Batch& g) {
  return (forward(net, x).array() * g.array()).sum();
}

bool same_pattern(const Network& a, const Batch& xa, const Network& b, const Batch& xb) {
  const ForwardCache ca = forward_cached(a, xa);
  const ForwardCache cb = forward_cached(b, xb);
  for (std::size_t k = 1; k + 1 < ca.activations.size(); ++k) {
    if (((ca.activations[k].array() > 0.0) != (cb.activations[k].array() > 0.0)).any()) return false;
  }
  return true;
}

Verdict gradient_check() {
  Timer timer;
  Rng rng(20240);
  std::uniform_int_distribution<int> n_layers(2, 5);
  std::uniform_int_distribution<int> width(1, 32);
  // With the ReLU pattern fixed the output is linear in any single weight or
  // input, so a wide step is exact and keeps roundoff far below tolerance.
  const double h = 1e-3;
  double worst = 0.0;
  int compared = 0, skipped = 0;
  auto compare = [&](double analytic, double fd) {
    if (std::abs(fd) + std::abs(analytic) <= 1e-6) return;
    const double rel =
        std::abs(analytic - fd) / std::max({1e-6, std::abs(analytic), std::abs(fd)});
    worst = std::max(worst, rel);
    ++compared;
  };
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> dims{width(rng.engine())};
    const int layers = n_layers(rng.engine());
    for (int k = 0; k < layers; ++k) dims.push_back(width(rng.engine()));
    Network net = init_network(dims, rng);
    for (Vector& b : net.biases) b = 0.1 * sample_gaussian(rng, b.size(), 1).col(0);
    const Batch x = sample_gaussian(rng, 8, dims.front());
    const Batch g = sample_gaussian(rng, 8, dims.back());
    const BackwardResult br = backward(net, x, g);
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
      for (Eigen::Index r = 0; r < net.weights[k].rows(); ++r) {
        for (Eigen::Index c = 0; c < net.weights[k].cols(); ++c) {
          Network plus = net, minus = net;
          plus.weights[k](r, c) += h;
          minus.weights[k](r, c) -= h;
          if (!same_pattern(plus, x, minus, x)) {
            ++skipped;
            continue;
          }
          compare(br.params.weights[k](r, c),
                  (contracted(plus, x, g) - contracted(minus, x, g)) / (2 * h));
        }
      }
      for (Eigen::Index i = 0; i < net.biases[k].size(); ++i) {
        Network plus = net, minus = net;
        plus.biases[k](i) += h;
        minus.biases[k](i) -= h;
        if (!same_pattern(plus, x, minus, x)) {
          ++skipped;
          continue;
        }
        compare(br.params.biases[k](i),
                (contracted(plus, x, g) - contracted(minus, x, g)) / (2 * h));
      }
    }
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        Batch xp = x, xm = x;
        xp(r, c) += h;
        xm(r, c) -= h;
        if (!same_pattern(net, xp, net, xm)) {
          ++skipped;
          continue;
        }
        compare(br.input(r, c), (contracted(net, xp, g) - contracted(net, xm, g)) / (2 * h));
      }
    }
  }
  const double secs = timer.seconds();
  detail("%d entries compared, %d skipped at ReLU kinks, max relative error %.2e, %.1f s",
         compared, skipped, worst, secs);
  Verdict v;
  v.require(worst < 1e-4, "max relative error " + fmt(worst, 6));
  v.require(secs < 10.0, "took " + fmt(secs, 1) + " s");
  v.require(compared > 1000, "too few entries compared");
  if (v.pass) v.summary = "20 random MLPs, max rel err " + fmt(worst * 1e6, 2) + "e-6";
  return v;
}

// ---------------------------------------------------------------- 2

struct KnownMiRun {
  double estimate = 0.0;
  double max_training = -1e300;
  double seconds = 0.0;
};

KnownMiRun known_mi(EstimatorMethod method, double rho, int iters, Eigen::Index eval_samples,
                    std::uint64_t seed) {
  Timer timer;
  EstimatorSpec spec;
  spec.method = method;
  Rng rng(seed);
  MiEstimator est(spec, 1, 1, rng);
  const double c = std::sqrt(1.0 - rho * rho);
  auto draw = [&](Eigen::Index n) {
    PairBatch p;
    p.x = sample_gaussian(rng, n, 1);
    p.z = rho * p.x + c * sample_gaussian(rng, n, 1);
    return p;
  };
  KnownMiRun run;
  for (int it = 0; it < iters; ++it) {
    const ObjectiveResult r = est.evaluate(draw(256), rng, false);
    run.max_training = std::max(run.max_training, r.estimate);
    est.update(r, 5e-4, 0.0);
  }
  run.estimate = est.estimate(draw(eval_samples), rng, 256);
  run.seconds = timer.seconds();
  return run;
}

Verdict known_mi_suite() {
  Verdict v;
  const double ln_k = std::log(256.0);
  for (double rho : {0.5, 0.9}) {
    const double truth = -0.5 * std::log(1.0 - rho * rho);
    for (EstimatorMethod m :
         {EstimatorMethod::mine, EstimatorMethod::smile, EstimatorMethod::infonce}) {
      // InfoNCE scores all K^2 pairs per step, about 200x the cost of a DV
      // step at K = 256, so it gets fewer steps to stay inside 2 minutes.
      const bool nce = m == EstimatorMethod::infonce;
      const KnownMiRun r = known_mi(m, rho, nce ? 300 : 4000, nce ? 10000 : 100000, 7);
      const std::string name = std::string(to_string(m)) + " rho=" + fmt(rho, 1);
      detail("%-16s estimate %.4f  true %.4f  max batch estimate %.4f  %.1f s", name.c_str(),
             r.estimate, truth, r.max_training, r.seconds);
      v.require(r.seconds <= 120.0, name + " took " + fmt(r.seconds, 1) + " s");
      switch (m) {
        case EstimatorMethod::mine:
          v.require(std::abs(r.estimate - truth) <= 0.05, name + " off by more than 0.05");
          break;
        case EstimatorMethod::smile:
          v.require(std::abs(r.estimate - truth) <= 0.1, name + " off by more than 0.1");
          if (rho == 0.9) v.require(r.estimate >= 0.6, name + " below 0.6");
          break;
        default:
          v.require(r.max_training <= ln_k + 1e-12 && r.estimate <= ln_k + 1e-12,
                    name + " exceeds ln 256");
          if (rho == 0.5) v.require(r.estimate >= 0.8 * truth, name + " below 0.8 x true MI");
          break;
      }
    }
  }
  if (v.pass) v.summary = "MINE, SMILE and InfoNCE on rho 0.5 and 0.9";
  return v;
}

// ---------------------------------------------------------------- shared sweeps

ExperimentConfig load_shipped(const std::string& name, const fs::path& out_dir) {
  ExperimentConfig cfg = load_config(kConfigDir / name);
  cfg.out_dir = out_dir;
  return cfg;
}

double cell_seconds(const CellResult& cell) {
  double s = 0.0;
  for (const RoundResult& r : cell.estimate.rounds) s += r.seconds;
  return s;
}

void print_cell(const CellResult& cell) {
  if (!cell.completed) {
    detail("%s %g dB: failed: %s", cell.estimator.c_str(), cell.snr_db, cell.error.c_str());
    return;
  }
  std::ostringstream rounds;
  for (double r : cell.estimate.per_round) rounds << ' ' << fmt(r, 3);
  detail("%s %g dB: mean %.4f var %.2e over %d rounds in %.0f s, rounds:%s", cell.estimator.c_str(),
         cell.snr_db, cell.estimate.mean, cell.estimate.variance, cell.estimate.completed(),
         cell_seconds(cell), rounds.str().c_str());
}

const CellResult* find_cell(const std::vector<CellResult>& cells, const std::string& est,
                            double snr) {
  for (const CellResult& c : cells) {
    if (c.estimator == est && c.snr_db == snr) return &c;
  }
  return nullptr;
}

std::vector<CellResult> run_sweep(const ExperimentConfig& cfg) {
  std::vector<CellResult> cells;
  run_experiment(cfg, print_cell, &cells);
  return cells;
}

// ---------------------------------------------------------------- 3, 4

struct Table1Target {
  const char* estimator;
  double snr;
  double lo;
  double hi;
};

Verdict table1(const std::vector<CellResult>& cells) {
  const Table1Target targets[] = {
      {"mine", 2, 0.476 - 0.05, 0.476 + 0.05},   {"mine", 20, 2.29 - 0.08, 2.29 + 0.08},
      {"mine", 40, 4.49 - 0.15, 4.49 + 0.15},    {"smile", 2, 0.42 - 0.1, 0.42 + 0.1},
      {"smile", 20, 2.12 - 0.1, 2.12 + 0.1},     {"smile", 40, 4.42 - 0.1, 4.42 + 0.1},
      {"entropy_based", 2, 0.388 - 0.1, 0.388 + 0.1},
      {"entropy_based", 20, 2.21 - 0.1, 2.21 + 0.1},
      {"entropy_based", 40, 3.8, 4.7},
  };
  Verdict v;
  for (const Table1Target& t : targets) {
    const std::string name = std::string(t.estimator) + " " + fmt(t.snr, 0) + " dB";
    const CellResult* cell = find_cell(cells, t.estimator, t.snr);
    if (cell == nullptr || !cell->completed) {
      v.require(false, name + " missing");
      continue;
    }
    const double m = cell->estimate.mean;
    const bool in = m >= t.lo && m <= t.hi;
    detail("%-20s %.4f in [%.3f, %.3f]: %s", name.c_str(), m, t.lo, t.hi, in ? "yes" : "no");
    v.require(in, name + " = " + fmt(m, 3) + " outside [" + fmt(t.lo, 3) + ", " + fmt(t.hi, 3) + "]");
    v.require(cell->estimate.completed() == 10, name + " completed fewer than 10 rounds");
    v.require(cell_seconds(*cell) <= 600.0, name + " took " + fmt(cell_seconds(*cell), 0) + " s");
  }
  if (v.pass) v.summary = "all 9 cells inside their windows, <= 10 min per cell";
  return v;
}

Verdict awgn_sanity(const std::vector<CellResult>& cells) {
  Verdict v;
  int checked = 0;
  double worst_margin = -1e300;
  for (const CellResult& cell : cells) {
    if (!cell.completed) continue;
    const double bound = awgn_capacity(std::pow(10.0, cell.snr_db / 10.0)) + 0.05;
    for (double r : cell.estimate.per_round) {
      ++checked;
      worst_margin = std::max(worst_margin, r - bound);
      if (r > bound) {
        v.require(false, cell.estimator + " " + fmt(cell.snr_db, 0) + " dB round estimate " +
                             fmt(r, 4) + " > " + fmt(bound, 4));
      }
    }
  }
  detail("%d round estimates checked, max(estimate - C - 0.05) = %.4f", checked, worst_margin);
  v.require(checked > 0, "no AWGN estimates");
  if (v.pass) v.summary = std::to_string(checked) + " AWGN round estimates <= C + 0.05";
  return v;
}

// ---------------------------------------------------------------- 5

Verdict table2(const std::vector<CellResult>& smile, const std::vector<CellResult>& chi) {
  Verdict v;
  for (double snr : {5.0, 10.0, 15.0, 20.0}) {
    const CapacityBounds b = literature_bounds(ChannelKind::optical_intensity, snr);
    const std::string name = "smile " + fmt(snr, 0) + " dB";
    const CellResult* cell = find_cell(smile, "smile", snr);
    if (cell == nullptr || !cell->completed) {
      v.require(false, name + " missing");
      continue;
    }
    const double m = cell->estimate.mean;
    const bool in = m >= b.lower - 0.1 && m <= b.upper + 0.1;
    detail("%-16s %.4f in [%.2f, %.2f]: %s", name.c_str(), m, b.lower - 0.1, b.upper + 0.1,
           in ? "yes" : "no");
    v.require(in, name + " = " + fmt(m, 3) + " outside its bound window");
  }
  const CellResult* cell = find_cell(chi, "chi_square", 10.0);
  if (cell == nullptr || !cell->completed) {
    v.require(false, "chi_square 10 dB missing");
  } else {
    const double m = cell->estimate.mean;
    const bool in = std::abs(m - 0.7611) <= 0.1;
    detail("chi_square 10 dB  %.4f in [0.6611, 0.8611]: %s", m, in ? "yes" : "no");
    v.require(in, "chi_square 10 dB = " + fmt(m, 3) + " outside 0.7611 +- 0.1");
  }
  if (v.pass) v.summary = "SMILE within the bound rows, chi_square near 0.7611";
  return v;
}

// ---------------------------------------------------------------- 6

Batch nit_samples(const InputTransformer& nit, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  return transform(nit, sample_gaussian(rng, n, 1), TransformMode::eval);
}

std::string describe(const std::vector<Cluster>& clusters) {
  std::ostringstream os;
  for (const Cluster& c : clusters) {
    os << " [" << fmt(c.left, 2) << ", " << fmt(c.right, 2) << "] mass " << fmt(c.mass, 3);
  }
  return os.str();
}

// One round of the given shipped estimator entry, trained for a fixed number
// of iterations. The window test stops as soon as the estimate plateaus, which
// is well before the transformer's shape stops moving, so it is disabled here.
RoundResult shape_round(const std::string& config, EstimatorMethod method, double snr, int iters) {
  const ExperimentConfig shipped = load_shipped(config, kOutRoot / "shape");
  EstimatorSpec spec;
  TrainConfig train;
  for (const EstimatorEntry& e : shipped.estimators) {
    if (e.spec.method != method) continue;
    spec = e.spec;
    train = e.train;
  }
  train.max_iters = iters;
  train.rounds = 1;
  train.convergence_tol = 1e-12;
  Timer timer;
  const RoundResult r = run_round(make_channel(shipped.channel, snr, shipped.noise_variance),
                                  default_constraint(shipped.channel, snr, shipped.noise_variance),
                                  spec, train, 0);
  detail("%s %s %g dB, %d iterations: estimate %.4f, %.0f s", std::string(to_string(shipped.channel)).c_str(),
         std::string(to_string(method)).c_str(), snr, r.iterations, r.estimate, timer.seconds());
  return r;
}

Verdict input_shape() {
  Verdict v;
  {
    const RoundResult r = shape_round("table1.json", EstimatorMethod::mine, 20, 40000);
    const Batch x = nit_samples(r.nit, 100000, 61);
    const Vector col = x.col(0);
    const double mean = col.mean();
    const double m2 = (col.array() - mean).square().mean();
    const double m3 = (col.array() - mean).cube().mean();
    const double m4 = (col.array() - mean).square().square().mean();
    const double skew = m3 / std::pow(m2, 1.5);
    const double exkurt = m4 / (m2 * m2) - 3.0;
    detail("(a) skew %.4f, excess kurtosis %.4f, power %.2f", skew, exkurt,
           col.array().square().mean());
    v.require(!r.aborted, "(a) run aborted");
    v.require(std::abs(skew) < 0.2, "(a) |skew| = " + fmt(std::abs(skew), 3));
    v.require(std::abs(exkurt) < 0.5, "(a) |excess kurtosis| = " + fmt(std::abs(exkurt), 3));
  }
  {
    // Low-SNR optical regime, where the optimal input is on-off keying.
    const RoundResult r = shape_round("table2.json", EstimatorMethod::smile, 0, 15000);
    const Batch x = nit_samples(r.nit, 100000, 62);
    const auto clusters = find_clusters(make_histogram(x, 100));
    const double top = x.maxCoeff();
    const bool at_zero = !clusters.empty() && clusters.front().left <= 0.1 * top;
    detail("(b) %zu clusters:%s", clusters.size(), describe(clusters).c_str());
    v.require(!r.aborted, "(b) run aborted");
    v.require(clusters.size() == 2, "(b) " + std::to_string(clusters.size()) + " clusters");
    v.require(at_zero, "(b) no cluster at 0");
  }
  {
    const RoundResult r = shape_round("table2.json", EstimatorMethod::smile, 10, 40000);
    const Batch x = nit_samples(r.nit, 100000, 63);
    const auto clusters = find_clusters(make_histogram(x, 100));
    detail("(c) %zu clusters:%s", clusters.size(), describe(clusters).c_str());
    v.require(!r.aborted, "(c) run aborted");
    v.require(clusters.size() >= 3 && clusters.size() <= 5,
              "(c) " + std::to_string(clusters.size()) + " clusters");
  }
  if (v.pass) v.summary = "Gaussian at 20 dB, binary at low SNR, 3-5 mass points at 10 dB";
  return v;
}

// ---------------------------------------------------------------- 7

Verdict blahut_arimoto_oracle() {
  Timer timer;
  Verdict v;

  const double p = 0.11;
  DiscreteChannel bsc;
  bsc.input_grid = {0.0, 1.0};
  bsc.output_grid = {0.0, 1.0};
  bsc.transition.resize(2, 2);
  bsc.transition << 1 - p, p, p, 1 - p;
  // ln 2 - H(0.11) is 0.346574 nats. 0.19336 is close to ln 2 minus the
  // entropy in bits (0.49992), a units slip, so the closed form is the oracle.
  const double bsc_truth = std::log(2.0) + p * std::log(p) + (1 - p) * std::log(1 - p);
  const BlahutArimotoResult b = blahut_arimoto(bsc, std::nullopt, 1e-9);
  detail("BSC(0.11): %.7f vs closed form %.7f nats (= %.5f bits)", b.capacity, bsc_truth,
         bsc_truth / std::log(2.0));
  v.require(std::abs(b.capacity - bsc_truth) <= 1e-5, "BSC off by " + fmt(b.capacity - bsc_truth, 7));

  const ChannelSpec ch = make_channel(ChannelKind::awgn, 2.0, 1.0);
  const ConstraintSpec cons = default_constraint(ChannelKind::awgn, 2.0, 1.0);
  std::vector<BlahutArimotoResult> runs;
  const int grids[] = {51, 101, 201, 401};
  for (int n : grids) {
    runs.push_back(blahut_arimoto(discretize_channel(ch, cons, n, 401), cons.power));
    detail("AWGN 2 dB, %d x 401: %.6f (gap %.1e, converged %d)", n, runs.back().capacity,
           runs.back().gap, runs.back().converged);
  }
  const double c401 = runs.back().capacity;
  v.require(std::abs(c401 - 0.474) <= 0.01, "AWGN 2 dB = " + fmt(c401, 4));
  // Nested input grids: the discretized capacity cannot decrease, so each
  // lower value must stay below the next certified upper bound.
  for (std::size_t k = 0; k + 1 < runs.size(); ++k) {
    v.require(runs[k].converged, "grid " + std::to_string(grids[k]) + " did not converge");
    v.require(runs[k + 1].capacity + runs[k + 1].gap >= runs[k].capacity,
              "not monotone from " + std::to_string(grids[k]) + " to " +
                  std::to_string(grids[k + 1]));
  }
  const double secs = timer.seconds();
  detail("%.1f s", secs);
  v.require(secs < 60.0, "took " + fmt(secs, 1) + " s");
  if (v.pass) v.summary = "BSC exact, AWGN 2 dB " + fmt(c401, 4) + ", monotone over 4 grids";
  return v;
}

// ---------------------------------------------------------------- 8

Verdict chi2_machinery() {
  Verdict v;
  Rng rng(88);
  const Batch q = sample_gaussian(rng, 100000, 1);
  const Batch p = (sample_gaussian(rng, 100000, 1).array() + 0.5).matrix();
  const double truth = std::exp(0.25) - 1.0;  // chi^2 between unit-variance Gaussians, shift 0.5
  const Chi2Divergences d = histogram_chi2(p, q, 100);
  const double bound = chi2_upper_bound(p, q, 100);
  detail("chi2(P||Q) %.4f, chi2(Q||P) %.4f, analytic %.4f, KL bound %.4f vs KL 0.125",
         d.p_given_q, d.q_given_p, truth, bound);
  v.require(std::abs(d.p_given_q - truth) <= 0.1 * truth, "chi2(P||Q) = " + fmt(d.p_given_q));
  v.require(std::abs(d.q_given_p - truth) <= 0.1 * truth, "chi2(Q||P) = " + fmt(d.q_given_p));
  v.require(bound >= 0.125, "bound " + fmt(bound) + " below KL");
  if (v.pass) v.summary = "chi2 " + fmt(d.p_given_q) + " vs 0.2840, bound " + fmt(bound) + " >= 0.125";
  return v;
}

// ---------------------------------------------------------------- 9

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

Verdict determinism() {
  const std::string text = R"({
    "channel": "awgn",
    "snr_db_list": [0, 10, 20],
    "estimators": ["mine", "smile"],
    "train": {"max_iters": 300, "phase0_iters": 100, "convergence_window": 100,
              "rounds": 10, "eval_samples": 20000, "seed": 99}
  })";
  Verdict v;
  std::vector<CellResult> first, second;
  for (int pass = 0; pass < 2; ++pass) {
    ExperimentConfig cfg = validate_config(text);
    cfg.out_dir = kOutRoot / ("determinism_" + std::to_string(pass));
    fs::remove_all(cfg.out_dir);
    run_experiment(cfg, {}, pass == 0 ? &first : &second);
  }
  const std::string a = slurp(kOutRoot / "determinism_0" / "results.csv");
  const std::string b = slurp(kOutRoot / "determinism_1" / "results.csv");
  v.require(!a.empty() && a == b, "results.csv differs between identical runs");

  const long rows = std::count(a.begin(), a.end(), '\n') - 1;
  detail("results.csv: %zu bytes, %ld rows, identical %d", a.size(), rows, a == b);
  v.require(rows == 6, std::to_string(rows) + " rows for 6 cells");

  for (const CellResult& cell : first) {
    const std::vector<double>& r = cell.estimate.per_round;
    double sum = 0.0;
    for (double x : r) sum += x;
    const double mean = sum / static_cast<double>(r.size());
    double ss = 0.0;
    for (double x : r) ss += (x - mean) * (x - mean);
    const double var = ss / static_cast<double>(r.size() - 1);
    const std::string name = cell.estimator + " " + fmt(cell.snr_db, 0) + " dB";
    v.require(r.size() == 10, name + " has " + std::to_string(r.size()) + " rounds");
    v.require(cell.estimate.variance == var, name + " variance differs from the unbiased formula");
    v.require(cell.estimate.mean == mean, name + " mean differs");
    const std::string line = std::string("awgn,") + format_number(cell.snr_db) + ',' +
                             cell.estimator + ',' + format_number(mean) + ',' +
                             format_number(var) + ",10,";
    v.require(a.find(line) != std::string::npos, name + " row does not report the variance");
  }
  if (v.pass) v.summary = "byte-identical results.csv, exact unbiased variance, 6 rows";
  return v;
}

}  // namespace

int main() {
  std::set<int> selected;
  if (const char* only = std::getenv("NCAP_ACCEPTANCE_ONLY")) {
    std::stringstream ss(only);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) selected.insert(std::stoi(item));
    }
  }
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };
  fs::create_directories(kOutRoot);

  std::map<int, Verdict> verdicts;
  auto run = [&](int id, const char* title, const std::function<Verdict()>& body) {
    std::printf("criterion %d: %s\n", id, title);
    std::fflush(stdout);
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v.pass = false;
      v.summary = std::string("exception: ") + e.what();
    }
    verdicts[id] = v;
    std::printf("[%s] criterion %d %s: %s\n", v.pass ? "PASS" : "FAIL", id, title, v.summary.c_str());
    std::fflush(stdout);
  };

  if (wanted(1)) run(1, "gradient correctness", gradient_check);
  if (wanted(2)) run(2, "known-MI estimator suite", known_mi_suite);

  std::vector<CellResult> awgn;
  if (wanted(3) || wanted(4)) {
    std::printf("AWGN sweep (configs/table1.json)\n");
    awgn = run_sweep(load_shipped("table1.json", kOutRoot / "table1"));
  }
  if (wanted(3)) run(3, "AWGN table reproduction", [&] { return table1(awgn); });
  if (wanted(4)) run(4, "AWGN estimates below capacity", [&] { return awgn_sanity(awgn); });

  std::vector<CellResult> smile, chi;
  if (wanted(5)) {
    std::printf("optical sweep (configs/table2.json)\n");
    const ExperimentConfig shipped = load_shipped("table2.json", kOutRoot / "table2_smile");
    for (const EstimatorEntry& e : shipped.estimators) {
      ExperimentConfig cfg = shipped;
      cfg.estimators = {e};
      if (e.spec.method == EstimatorMethod::smile) {
        smile = run_sweep(cfg);
      } else if (e.spec.method == EstimatorMethod::chi_square) {
        cfg.snr_db_list = {10.0};
        cfg.out_dir = kOutRoot / "table2_chi_square";
        chi = run_sweep(cfg);
      }
    }
  }
  if (wanted(5)) run(5, "optical table plausibility", [&] { return table2(smile, chi); });

  if (wanted(6)) run(6, "learned input distribution shape", input_shape);
  if (wanted(7)) run(7, "Blahut-Arimoto oracle", blahut_arimoto_oracle);
  if (wanted(8)) run(8, "chi-square upper-bound machinery", chi2_machinery);
  if (wanted(9)) run(9, "determinism and reporting", determinism);

  int failed = 0;
  for (const auto& [id, v] : verdicts) failed += v.pass ? 0 : 1;
  std::printf("%zu criteria run, %d failed\n", verdicts.size(), failed);
  return failed == 0 ? 0 : 1;
}
