#include "ncap/reference.hpp"

#include "ncap/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ncap {

double awgn_capacity(double snr_linear) {
  if (snr_linear < 0.0 || !std::isfinite(snr_linear)) {
    throw std::invalid_argument("awgn_capacity: snr must be >= 0");
  }
  return 0.5 * std::log1p(snr_linear);
}

void DiscreteChannel::validate() const {
  if (transition.rows() != static_cast<Eigen::Index>(inputs()) ||
      transition.cols() != static_cast<Eigen::Index>(outputs())) {
    throw std::invalid_argument("DiscreteChannel: transition shape does not match grids");
  }
  if ((transition.array() < 0.0).any()) {
    throw std::invalid_argument("DiscreteChannel: negative transition probability");
  }
  for (Eigen::Index i = 0; i < transition.rows(); ++i) {
    if (std::abs(transition.row(i).sum() - 1.0) > 1e-9) {
      throw std::invalid_argument("DiscreteChannel: row " + std::to_string(i) +
                                  " does not sum to 1");
    }
  }
}

namespace {

// P(N <= t) for N ~ N(0, 1); erfc keeps the tails accurate.
double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

}  // namespace

DiscreteChannel discretize_channel(const ChannelSpec& channel, const ConstraintSpec& constraint,
                                   int n_in, int m_out, double support_sigmas) {
  channel.validate();
  constraint.validate();
  if (n_in < 2 || m_out < 2) throw std::invalid_argument("discretize_channel: need n_in, m_out >= 2");

  double lo = 0.0;
  double hi = 0.0;
  if (constraint.kind == ConstraintKind::peak) {
    lo = -constraint.amplitude;
    hi = constraint.amplitude;
  } else {
    hi = support_sigmas * std::sqrt(constraint.power);
    lo = constraint.kind == ConstraintKind::nonneg_average_power ? 0.0 : -hi;
  }

  DiscreteChannel dc;
  dc.input_grid.resize(static_cast<std::size_t>(n_in));
  for (int i = 0; i < n_in; ++i) {
    dc.input_grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n_in - 1);
  }

  const double sigma = std::sqrt(channel.noise_variance);
  const double out_lo = lo - 5.0 * sigma;
  const double out_hi = hi + 5.0 * sigma;
  const double width = (out_hi - out_lo) / m_out;
  std::vector<double> edges(static_cast<std::size_t>(m_out) + 1);
  for (int j = 0; j <= m_out; ++j) edges[static_cast<std::size_t>(j)] = out_lo + j * width;
  edges.front() = -std::numeric_limits<double>::infinity();
  edges.back() = std::numeric_limits<double>::infinity();
  dc.output_grid.resize(static_cast<std::size_t>(m_out));
  for (int j = 0; j < m_out; ++j) {
    dc.output_grid[static_cast<std::size_t>(j)] = out_lo + (j + 0.5) * width;
  }

  // Each bin mass is differenced on the side of x where both tails are small,
  // so far-tail probabilities keep full relative precision.
  dc.transition.resize(n_in, m_out);
  for (int i = 0; i < n_in; ++i) {
    const double x = dc.input_grid[static_cast<std::size_t>(i)];
    for (int j = 0; j < m_out; ++j) {
      const double a = (edges[static_cast<std::size_t>(j)] - x) / sigma;
      const double b = (edges[static_cast<std::size_t>(j) + 1] - x) / sigma;
      double mass = 0.0;
      if (a >= 0.0) {
        mass = normal_cdf(-a) - normal_cdf(-b);
      } else if (b <= 0.0) {
        mass = normal_cdf(b) - normal_cdf(a);
      } else {
        mass = 1.0 - normal_cdf(a) - normal_cdf(-b);
      }
      dc.transition(i, j) = std::max(mass, 0.0);
    }
    dc.transition.row(i) /= dc.transition.row(i).sum();
  }
  return dc;
}

namespace {

// Share of uniform mass mixed into every warm start.
constexpr double kWarmFloor = 1e-6;
// Inner tolerance used while searching for the multiplier.
constexpr double kCoarseTol = 1e-3;
// Relative bracket width at which the multiplier search switches to tol.
constexpr double kCoarseBracket = 0.01;
constexpr double kMinMultiplier = 1e-12;
constexpr double kMaxMultiplier = 1e12;

struct InnerSolve {
  Vector pmf;
  double gap = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Row-wise sum_j W_ij ln W_ij, with 0 ln 0 = 0.
Vector row_negentropy(const Matrix& w) {
  return w.unaryExpr([](double v) { return v > 0.0 ? v * std::log(v) : 0.0; }).rowwise().sum();
}

// D(W_i || q) for every input i.
Vector divergences(const Matrix& w, const Vector& negentropy, const Vector& pmf) {
  const Vector q = w.transpose() * pmf;
  const Vector log_q = q.unaryExpr([](double v) { return std::log(std::max(v, 1e-300)); });
  return negentropy - w * log_q;
}

InnerSolve solve_with_cost(const Matrix& w, const Vector& negentropy, const Vector& cost,
                           double multiplier, Vector pmf, double tol, int max_iter) {
  // A warm start may carry inputs with vanishing mass; a small uniform floor
  // lets them recover in a few multiplicative steps instead of thousands.
  const double n = static_cast<double>(pmf.size());
  pmf = (1.0 - kWarmFloor) * pmf + Vector::Constant(pmf.size(), kWarmFloor / n);
  InnerSolve out;
  for (int it = 0; it < max_iter; ++it) {
    const Vector c = divergences(w, negentropy, pmf) - multiplier * cost;
    const double lower = pmf.dot(c);
    const double upper = c.maxCoeff();
    out.iterations = it + 1;
    out.gap = upper - lower;
    if (out.gap < tol) {
      out.converged = true;
      break;
    }
    const Eigen::ArrayXd unnorm = pmf.array() * (c.array() - upper).exp();
    pmf = unnorm / unnorm.sum();
  }
  out.pmf = std::move(pmf);
  return out;
}

}  // namespace

double mutual_information(const DiscreteChannel& dc, const Vector& input_pmf) {
  const Matrix& w = dc.transition;
  return input_pmf.dot(divergences(w, row_negentropy(w), input_pmf));
}

BlahutArimotoResult blahut_arimoto(const DiscreteChannel& dc,
                                   std::optional<double> second_moment_budget, double tol,
                                   int max_iter) {
  dc.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("blahut_arimoto: tol must be > 0");
  if (second_moment_budget && !(*second_moment_budget > 0.0)) {
    throw std::invalid_argument("blahut_arimoto: budget must be > 0");
  }
  const Matrix& w = dc.transition;
  const auto n = static_cast<Eigen::Index>(dc.inputs());
  const Vector negentropy = row_negentropy(w);
  Vector cost(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cost(i) = dc.input_grid[static_cast<std::size_t>(i)] * dc.input_grid[static_cast<std::size_t>(i)];
  }
  const Vector uniform = Vector::Constant(n, 1.0 / static_cast<double>(n));

  BlahutArimotoResult result;
  auto solve = [&](double multiplier, const Vector& start, double inner_tol) {
    InnerSolve s = solve_with_cost(w, negentropy, cost, multiplier, start, inner_tol, max_iter);
    result.iterations += s.iterations;
    return s;
  };
  // Weak duality: for any multiplier s >= 0 and pmf p,
  //   C(budget) <= max_i (D_i(p) - s x_i^2) + s budget,
  // so the gap reported below bounds the distance to the discretized optimum.
  auto finish = [&](const InnerSolve& s, double multiplier, double budget_term) {
    result.input_pmf = s.pmf;
    result.multiplier = multiplier;
    result.second_moment = s.pmf.dot(cost);
    result.capacity = s.pmf.dot(divergences(w, negentropy, s.pmf));
    const Vector c = divergences(w, negentropy, s.pmf) - multiplier * cost;
    result.gap = c.maxCoeff() + multiplier * budget_term - result.capacity;
    result.converged = result.gap < tol;
    return result;
  };

  // Coarse solves are enough to decide activity and to narrow the multiplier
  // search; the final bracket is re-solved at tol.
  const double coarse = std::max(tol, kCoarseTol);
  InnerSolve free_solve = solve(0.0, uniform, coarse);
  if (!second_moment_budget) return finish(solve(0.0, free_solve.pmf, tol), 0.0, 0.0);
  const double budget = *second_moment_budget;
  if (free_solve.pmf.dot(cost) <= budget) {
    free_solve = solve(0.0, free_solve.pmf, tol);
    if (free_solve.pmf.dot(cost) <= budget) return finish(free_solve, 0.0, 0.0);
  }

  // Bracket and narrow the multiplier with coarse solves, each warm-started
  // from the solve nearest in s.
  double s_lo = 0.0;
  double s_hi = 1.0 / budget;
  InnerSolve lo = free_solve;
  InnerSolve hi = solve(s_hi, free_solve.pmf, coarse);
  for (int k = 0; k < 60 && hi.pmf.dot(cost) > budget; ++k) {
    s_lo = s_hi;
    lo = std::move(hi);
    s_hi *= 2.0;
    hi = solve(s_hi, lo.pmf, coarse);
  }
  auto bisect = [&](double inner_tol, auto done) {
    for (int k = 0; k < 100 && !done(); ++k) {
      const double s_mid = 0.5 * (s_lo + s_hi);
      InnerSolve mid = solve(s_mid, (s_mid - s_lo < s_hi - s_mid ? lo : hi).pmf, inner_tol);
      if (mid.pmf.dot(cost) > budget) {
        s_lo = s_mid;
        lo = std::move(mid);
      } else {
        s_hi = s_mid;
        hi = std::move(mid);
      }
    }
  };
  bisect(coarse, [&] { return s_hi - s_lo <= kCoarseBracket * s_hi; });

  // Coarse solves misjudge E[X^2] slightly, so re-check both ends at full
  // precision and widen the bracket where needed.
  const double fine = 0.5 * tol;
  hi = solve(s_hi, hi.pmf, fine);
  while (hi.pmf.dot(cost) > budget && s_hi < kMaxMultiplier) {
    s_lo = s_hi;
    lo = hi;
    s_hi *= 1.0 + 4.0 * kCoarseBracket;
    hi = solve(s_hi, hi.pmf, fine);
  }
  if (s_lo > 0.0) {
    lo = solve(s_lo, lo.pmf, fine);
    while (lo.pmf.dot(cost) <= budget && s_lo > 0.0) {
      s_hi = s_lo;
      hi = lo;
      s_lo = s_lo > kMinMultiplier ? s_lo * (1.0 - 4.0 * kCoarseBracket) : 0.0;
      lo = solve(s_lo, lo.pmf, fine);
    }
  }
  // The bound gap is the inner gap plus the slack s (budget - E[X^2]); bisect
  // until the slack is a small share of tol.
  bisect(fine, [&] {
    return s_hi * (budget - hi.pmf.dot(cost)) <= 0.25 * tol || s_hi - s_lo <= 1e-15 * s_hi;
  });
  return finish(hi, s_hi, budget);
}

namespace {

struct BoundRow {
  ChannelKind kind;
  double snr_db;
  CapacityBounds bounds;
};

constexpr std::array<BoundRow, 4> kBoundTable{{
    {ChannelKind::optical_intensity, 5.0, {0.42, 0.99}},
    {ChannelKind::optical_intensity, 10.0, {0.83, 1.480}},
    {ChannelKind::optical_intensity, 15.0, {1.34, 1.77}},
    {ChannelKind::optical_intensity, 20.0, {1.78, 2.22}},
}};

}  // namespace

CapacityBounds literature_bounds(ChannelKind kind, double snr_db) {
  for (const BoundRow& row : kBoundTable) {
    if (row.kind == kind && std::abs(row.snr_db - snr_db) < 1e-9) return row.bounds;
  }
  throw NotFound("no published bounds for channel '" + std::string(to_string(kind)) +
                 "' at " + std::to_string(snr_db) + " dB");
}

void write_bound_table_csv(std::ostream& os) {
  os << "channel,snr_db,lower_nats,upper_nats\n";
  for (const BoundRow& row : kBoundTable) {
    os << to_string(row.kind) << ',' << row.snr_db << ',' << row.bounds.lower << ','
       << row.bounds.upper << '\n';
  }
}

}  // namespace ncap
