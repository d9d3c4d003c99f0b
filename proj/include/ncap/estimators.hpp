#pragma once

// Neural mutual-information estimators. Each objective evaluates a
// variational bound on a batch of joint samples (x, z) and returns
//   * the MI estimate in nats,
//   * the gradient of each critic's training objective (ascent direction),
//   * optionally d(estimate)/dx and d(estimate)/dz for training an upstream
//     input generator.

#include "ncap/nn.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace ncap {

struct PairBatch {
  Batch x;  // B x dx
  Batch z;  // B x dz

  Eigen::Index size() const { return x.rows(); }
  /// [x | z], the critic input.
  Batch joined() const;
};

/// Product-of-marginals samples (x_i, z_perm[i]).
struct ShuffledPairs {
  PairBatch pairs;
  std::vector<Eigen::Index> perm;
};

ShuffledPairs shuffle_marginals(const PairBatch& joint, Rng& rng);

enum class ReferenceFamily { uniform_box, gaussian };

/// Product reference distribution; parameters are per dimension
/// (lower/upper bounds for uniform_box, mean/variance for gaussian).
struct ReferenceDistribution {
  ReferenceFamily family = ReferenceFamily::gaussian;
  Vector first;
  Vector second;

  static ReferenceDistribution gaussian(Vector mean, Vector variance);
  static ReferenceDistribution uniform_box(Vector lower, Vector upper);
  /// Gaussian with the batch's per-column mean and variance.
  static ReferenceDistribution matched_gaussian(const Batch& samples);
  /// Box over the batch range, widened by `margin` of the range on each side.
  static ReferenceDistribution matched_uniform(const Batch& samples, double margin = 0.05);

  int dim() const { return static_cast<int>(first.size()); }
  Batch sample(Eigen::Index n, Rng& rng) const;
  /// Throws EstimationError when samples fall outside the support.
  void check_covers(const Batch& samples) const;
};

/// Which gradients an objective should compute.
struct GradRequest {
  bool critic = true;   // critic parameter gradients
  bool inputs = false;  // d(estimate)/dx and d(estimate)/dz
};

struct ObjectiveResult {
  double estimate = 0.0;
  std::vector<Gradients> critic_grads;  // empty unless requested
  Batch grad_x;  // empty unless input gradients were requested
  Batch grad_z;
};

struct MineEmaState {
  double ema_denominator = 1.0;
  bool initialized = false;
};

/// log(mean(exp(v))) computed with the max subtracted.
double log_mean_exp(const Vector& v);

/// Donsker-Varadhan bound. With `ema` the gradient's partition denominator
/// is the moving average (updated in place with `ema_rate`); the reported
/// estimate always uses the batch mean.
ObjectiveResult mine_objective(const Network& critic, const PairBatch& joint,
                               const ShuffledPairs& shuffled, MineEmaState* ema,
                               double ema_rate, GradRequest grads = {});

/// DV bound with exp(T) clamped to [e^-tau, e^tau] in the partition term.
/// Both critic and input gradients come from the Jensen-Shannon f-GAN
/// objective, whose optimum is the log density ratio; the clipped DV value
/// is only reported.
ObjectiveResult smile_objective(const Network& critic, const PairBatch& joint,
                                const ShuffledPairs& shuffled, double tau,
                                GradRequest grads = {});

/// Contrastive K-sample bound over all K x K pairings. Always <= ln K.
ObjectiveResult infonce_objective(const Network& critic, const PairBatch& joint,
                                  GradRequest grads = {});

struct Chi2Divergences {
  double p_given_q = 0.0;  // chi^2(P || Q)
  double q_given_p = 0.0;  // chi^2(Q || P)
};

/// Histogram estimates of chi^2(P||Q) and chi^2(Q||P) on shared equal-width
/// bins spanning the pooled range (widened 1% per side). Empty bins in the
/// denominator distribution are floored at 0.5 / n.
Chi2Divergences histogram_chi2(const Batch& p_samples, const Batch& q_samples, int bins);

/// KL upper bound from the two chi^2 divergences:
///   ln(1 + c) - 1.5 c^2 / ((1 + c')(1 + c)^2 - 1)
double chi2_kl_upper(double chi2_pq, double chi2_qp);

/// chi2_kl_upper applied to the histogram estimates.
double chi2_upper_bound(const Batch& p_samples, const Batch& q_samples, int bins);

struct ChiSquareTerms {
  double tuba = 0.0;     // E_P[T] - E_Q[e^T]/alpha - ln(alpha) + 1
  double x_upper = 0.0;  // chi^2 KL bound between X and its reference
  double z_upper = 0.0;
};

/// MI lower bound: TUBA bound of D(P_XZ || Q_X' x Q_Z') minus the chi^2
/// upper bounds of D(P_X || Q_X') and D(P_Z || Q_Z'). Only the TUBA term
/// carries gradients.
ObjectiveResult chi_square_mi_lower(const Network& critic, const PairBatch& joint,
                                    const ReferenceDistribution& x_reference,
                                    const ReferenceDistribution& z_reference, double alpha,
                                    int bins, Rng& rng, GradRequest grads = {},
                                    ChiSquareTerms* terms = nullptr);

struct EntropyEmaState {
  MineEmaState marginal;
  MineEmaState joint;
};

struct EntropyTerms {
  double conditional_kl = 0.0;  // D(P_XZ || P_X x Q_Z')
  double marginal_kl = 0.0;     // D(P_Z || Q_Z')
};

/// Entropy decomposition I = D(P_XZ || P_X x Q_Z') - D(P_Z || Q_Z'), both
/// terms in DV form against the same reference draws. critic_grads[0] is for
/// `marginal_critic` (input z), critic_grads[1] for `joint_critic` (x, z).
/// With `ema`, each partition gradient uses a moving-average denominator as
/// in mine_objective; without it the reference partition at high SNR is hit
/// so rarely that the joint critic grows unbounded spikes along z = x.
ObjectiveResult entropy_based_objective(const Network& marginal_critic,
                                        const Network& joint_critic, const PairBatch& joint,
                                        const ReferenceDistribution& z_reference, Rng& rng,
                                        GradRequest grads = {},
                                        EntropyTerms* terms = nullptr,
                                        EntropyEmaState* ema = nullptr, double ema_rate = 0.99);

enum class EstimatorMethod { mine, smile, infonce, chi_square, entropy_based };

std::string_view to_string(EstimatorMethod method);
EstimatorMethod parse_estimator_method(std::string_view name);

struct EstimatorSpec {
  EstimatorMethod method = EstimatorMethod::mine;
  double tau = 0.2;
  double alpha = 1.0;
  double ema_rate = 0.99;
  int hist_bins = 100;
  /// Reference family for the entropy-based and chi-square methods; its
  /// parameters are matched to each batch.
  ReferenceFamily reference = ReferenceFamily::gaussian;
  /// Hidden widths of each critic network.
  std::vector<int> hidden = {64, 64, 64};

  void validate() const;
};

/// Owns the critic network(s) and optimizer state of one estimator.
class MiEstimator {
 public:
  MiEstimator(EstimatorSpec spec, int x_dim, int z_dim, Rng& rng);

  const EstimatorSpec& spec() const { return spec_; }
  const std::vector<Network>& critics() const { return critics_; }
  std::vector<Network>& critics() { return critics_; }

  /// Training-time evaluation on one batch. Advances the MINE moving
  /// average when applicable.
  ObjectiveResult evaluate(const PairBatch& joint, Rng& rng, bool input_grads);

  /// Estimate only, on an arbitrarily large sample (InfoNCE averages over
  /// chunks of `chunk` samples). Does not modify any state.
  double estimate(const PairBatch& joint, Rng& rng, Eigen::Index chunk = 256) const;

  /// One Adam ascent step per critic on the training objective, after
  /// global-norm clipping (skipped when grad_clip is 0). Returns false if a step was skipped because of a
  /// non-finite gradient.
  bool update(const ObjectiveResult& result, double lr, double grad_clip);

 private:
  EstimatorSpec spec_;
  std::vector<Network> critics_;
  std::vector<AdamState> adam_;
  MineEmaState ema_;
  EntropyEmaState dine_ema_;
};

}  // namespace ncap
