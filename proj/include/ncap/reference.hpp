#pragma once

// Ground-truth values for validation: the AWGN closed form, a Blahut-Arimoto
// solver on discretized channels, and published capacity bounds for the
// optical intensity channel.

#include "ncap/channels.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace ncap {

/// 0.5 ln(1 + snr) nats.
double awgn_capacity(double snr_linear);

/// Discrete memoryless channel: transition(i, j) = P(output bin j | input i).
struct DiscreteChannel {
  std::vector<double> input_grid;
  std::vector<double> output_grid;  // output bin centers
  Matrix transition;

  std::size_t inputs() const { return input_grid.size(); }
  std::size_t outputs() const { return output_grid.size(); }
  /// Throws std::invalid_argument unless rows are distributions (1e-9).
  void validate() const;
};

/// Quantizes an additive Gaussian channel. Inputs are n_in equally spaced
/// points on the feasible support ([0, s*sqrt(P)] optical, [-A, A] peak,
/// [-s*sqrt(P), s*sqrt(P)] otherwise, s = support_sigmas); outputs are m_out
/// equal-width bins over the input range padded by 5 noise std devs, with the
/// Gaussian tails folded into the edge bins.
DiscreteChannel discretize_channel(const ChannelSpec& channel, const ConstraintSpec& constraint,
                                   int n_in, int m_out, double support_sigmas = 4.0);

struct BlahutArimotoResult {
  double capacity = 0.0;  // I(p) in nats at the returned pmf
  Vector input_pmf;
  bool converged = false;
  int iterations = 0;         // inner iterations, summed over the multiplier search
  double multiplier = 0.0;    // Lagrange multiplier on E[X^2]
  double second_moment = 0.0; // E_p[X^2]
  double gap = 0.0;           // dual upper bound minus capacity; < tol when converged
};

/// Capacity of a discrete channel, optionally under E[X^2] <= budget. The
/// constrained problem is solved by bisection on the multiplier of the cost
/// x^2; the returned pmf is always feasible. The dual gap shrinks roughly
/// like 1/iterations on fine grids, so tolerances below 1e-5 get expensive.
BlahutArimotoResult blahut_arimoto(const DiscreteChannel& dc,
                                   std::optional<double> second_moment_budget = std::nullopt,
                                   double tol = 1e-4, int max_iter = 100000);

/// Mutual information I(p; W) in nats.
double mutual_information(const DiscreteChannel& dc, const Vector& input_pmf);

struct CapacityBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Published lower/upper capacity bounds in nats (optical intensity channel,
/// unit noise variance, SNR in {5, 10, 15, 20} dB). Throws NotFound otherwise.
CapacityBounds literature_bounds(ChannelKind kind, double snr_db);

/// The bound table as CSV: channel,snr_db,lower_nats,upper_nats.
void write_bound_table_csv(std::ostream& os);

}  // namespace ncap
