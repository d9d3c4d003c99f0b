#include "ncap/estimators.hpp"

#include "ncap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ncap {

namespace {

constexpr double kExpLimit = 700.0;  // exp() overflows just above 709
constexpr Eigen::Index kEvalChunk = 4096;
constexpr Eigen::Index kTrainChunk = 1024;

Vector as_vector(const Matrix& feature_major_output) {
  return feature_major_output.row(0).transpose();
}

void check_critic(const Network& critic, Eigen::Index in_dim, const char* who) {
  if (critic.output_dim() != 1) {
    throw std::invalid_argument(std::string(who) + ": critic must have a scalar output");
  }
  if (critic.input_dim() != in_dim) {
    throw std::invalid_argument(std::string(who) + ": critic input dim mismatch");
  }
}

void check_joint(const PairBatch& joint, const char* who) {
  if (joint.x.rows() < 1 || joint.x.rows() != joint.z.rows()) {
    throw std::invalid_argument(std::string(who) + ": x and z batches must be nonempty and equal-sized");
  }
}

// Critic evaluated on one input batch; the cache is kept only when a reverse
// sweep will follow.
struct CriticPass {
  ForwardCache cache;
  Vector t;
};

CriticPass run_critic(const Network& critic, const Batch& input, bool keep) {
  CriticPass pass;
  if (keep) {
    pass.cache = forward_cached(critic, input);
    pass.t = as_vector(pass.cache.activations.back());
    return pass;
  }
  pass.t.resize(input.rows());
  for (Eigen::Index start = 0; start < input.rows(); start += kEvalChunk) {
    const Eigen::Index n = std::min(kEvalChunk, input.rows() - start);
    pass.t.segment(start, n) = forward(critic, input.middleRows(start, n)).col(0);
  }
  return pass;
}

// Splits a gradient w.r.t. [x | z] rows and adds it to (gx, gz). z rows are
// routed through `perm` when the pairs were shuffled.
void route_pair_grads(const Batch& grad_joined, Eigen::Index dx,
                      const std::vector<Eigen::Index>* perm, double sign, Batch& gx,
                      Batch& gz) {
  const Eigen::Index dz = grad_joined.cols() - dx;
  gx += sign * grad_joined.leftCols(dx);
  if (perm == nullptr) {
    gz += sign * grad_joined.rightCols(dz);
    return;
  }
  for (Eigen::Index i = 0; i < grad_joined.rows(); ++i) {
    gz.row((*perm)[static_cast<std::size_t>(i)]) += sign * grad_joined.row(i).tail(dz);
  }
}

void init_input_grads(ObjectiveResult& r, const PairBatch& joint) {
  r.grad_x = Batch::Zero(joint.x.rows(), joint.x.cols());
  r.grad_z = Batch::Zero(joint.z.rows(), joint.z.cols());
}

double sigmoid(double v) {
  return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

double finite_or_throw(double v, const char* who) {
  if (!std::isfinite(v)) throw NumericError(std::string(who) + ": non-finite estimate");
  return v;
}

}  // namespace

Batch PairBatch::joined() const {
  Batch out(x.rows(), x.cols() + z.cols());
  out << x, z;
  return out;
}

ShuffledPairs shuffle_marginals(const PairBatch& joint, Rng& rng) {
  check_joint(joint, "shuffle_marginals");
  const Eigen::Index n = joint.size();
  if (n < 2) throw std::invalid_argument("shuffle_marginals: need at least 2 samples");
  ShuffledPairs out;
  out.perm.resize(static_cast<std::size_t>(n));
  std::iota(out.perm.begin(), out.perm.end(), Eigen::Index{0});
  // Fisher-Yates drawing from the raw 64-bit stream keeps results identical
  // across standard library implementations.
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(out.perm[static_cast<std::size_t>(i)], out.perm[static_cast<std::size_t>(j)]);
  }
  out.pairs.x = joint.x;
  out.pairs.z.resize(joint.z.rows(), joint.z.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.pairs.z.row(i) = joint.z.row(out.perm[static_cast<std::size_t>(i)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reference distributions

ReferenceDistribution ReferenceDistribution::gaussian(Vector mean, Vector variance) {
  if (mean.size() != variance.size() || mean.size() == 0) {
    throw std::invalid_argument("reference: mean/variance size mismatch");
  }
  if ((variance.array() <= 0.0).any()) throw std::invalid_argument("reference: variance must be > 0");
  return {ReferenceFamily::gaussian, std::move(mean), std::move(variance)};
}

ReferenceDistribution ReferenceDistribution::uniform_box(Vector lower, Vector upper) {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw std::invalid_argument("reference: bound size mismatch");
  }
  if ((upper.array() <= lower.array()).any()) {
    throw std::invalid_argument("reference: empty box");
  }
  return {ReferenceFamily::uniform_box, std::move(lower), std::move(upper)};
}

ReferenceDistribution ReferenceDistribution::matched_gaussian(const Batch& samples) {
  if (samples.rows() < 2) throw std::invalid_argument("reference: need >= 2 samples");
  Vector mean = samples.colwise().mean().transpose();
  Vector var = (samples.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() /
               static_cast<double>(samples.rows() - 1);
  var = var.cwiseMax(1e-12);
  return gaussian(std::move(mean), std::move(var));
}

ReferenceDistribution ReferenceDistribution::matched_uniform(const Batch& samples, double margin) {
  if (samples.rows() < 1) throw std::invalid_argument("reference: need samples");
  Vector lo = samples.colwise().minCoeff().transpose();
  Vector hi = samples.colwise().maxCoeff().transpose();
  Vector range = (hi - lo).cwiseMax(1e-9);
  return uniform_box(lo - margin * range, hi + margin * range);
}

Batch ReferenceDistribution::sample(Eigen::Index n, Rng& rng) const {
  Batch out(n, dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < dim(); ++j) {
      if (family == ReferenceFamily::gaussian) {
        out(i, j) = first(j) + std::sqrt(second(j)) * rng.gaussian();
      } else {
        out(i, j) = first(j) + (second(j) - first(j)) * rng.uniform();
      }
    }
  }
  return out;
}

void ReferenceDistribution::check_covers(const Batch& samples) const {
  if (samples.cols() != dim()) throw std::invalid_argument("reference: dimension mismatch");
  if (family == ReferenceFamily::gaussian) return;
  for (int j = 0; j < dim(); ++j) {
    const double lo = samples.col(j).minCoeff();
    const double hi = samples.col(j).maxCoeff();
    if (lo < first(j) || hi > second(j)) {
      throw EstimationError("reference support [" + std::to_string(first(j)) + ", " +
                            std::to_string(second(j)) + "] does not cover samples in [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "] (dim " +
                            std::to_string(j) + ")");
    }
  }
}

// ---------------------------------------------------------------------------
// Direct estimators

double log_mean_exp(const Vector& v) {
  if (v.size() == 0) throw std::invalid_argument("log_mean_exp: empty input");
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().mean());
}

namespace {

// Moves the moving average of mean(e^T) towards this batch's value and
// returns the log of the denominator the gradient should use.
double advance_ema(MineEmaState* ema, double ema_rate, double lme, const char* who) {
  if (ema == nullptr) return lme;
  if (lme > kExpLimit) throw NumericError(std::string(who) + ": partition term overflows");
  const double batch_mean = std::exp(lme);
  if (!ema->initialized) {
    ema->ema_denominator = batch_mean;
    ema->initialized = true;
  } else {
    ema->ema_denominator = ema_rate * ema->ema_denominator + (1.0 - ema_rate) * batch_mean;
  }
  return std::log(ema->ema_denominator);
}

}  // namespace

ObjectiveResult mine_objective(const Network& critic, const PairBatch& joint,
                               const ShuffledPairs& shuffled, MineEmaState* ema,
                               double ema_rate, GradRequest grads) {
  check_joint(joint, "mine_objective");
  check_joint(shuffled.pairs, "mine_objective");
  if (shuffled.pairs.size() != joint.size()) {
    throw std::invalid_argument("mine_objective: joint and shuffled sizes differ");
  }
  const Batch j_in = joint.joined();
  const Batch s_in = shuffled.pairs.joined();
  check_critic(critic, j_in.cols(), "mine_objective");

  const bool keep = grads.critic || grads.inputs;
  const CriticPass pj = run_critic(critic, j_in, keep);
  const CriticPass ps = run_critic(critic, s_in, keep);
  const double lme = log_mean_exp(ps.t);

  ObjectiveResult r;
  r.estimate = finite_or_throw(pj.t.mean() - lme, "mine_objective");

  const double log_denominator = advance_ema(ema, ema_rate, lme, "mine_objective");
  if (!keep) return r;

  const auto n = static_cast<double>(joint.size());
  const Batch gj = Batch::Constant(joint.size(), 1, 1.0 / n);
  const Batch gs = -((ps.t.array() - log_denominator).exp() / n).matrix();
  BackwardResult bj = backward(critic, pj.cache, gj);
  BackwardResult bs = backward(critic, ps.cache, gs);
  if (grads.critic) {
    bj.params += bs.params;
    r.critic_grads.push_back(std::move(bj.params));
  }
  if (grads.inputs) {
    init_input_grads(r, joint);
    route_pair_grads(bj.input, joint.x.cols(), nullptr, 1.0, r.grad_x, r.grad_z);
    route_pair_grads(bs.input, joint.x.cols(), &shuffled.perm, 1.0, r.grad_x, r.grad_z);
  }
  return r;
}

ObjectiveResult smile_objective(const Network& critic, const PairBatch& joint,
                                const ShuffledPairs& shuffled, double tau, GradRequest grads) {
  if (!(tau > 0.0)) throw std::invalid_argument("smile_objective: tau must be > 0");
  check_joint(joint, "smile_objective");
  if (shuffled.pairs.size() != joint.size()) {
    throw std::invalid_argument("smile_objective: joint and shuffled sizes differ");
  }
  const Batch j_in = joint.joined();
  const Batch s_in = shuffled.pairs.joined();
  check_critic(critic, j_in.cols(), "smile_objective");

  const bool keep = grads.critic || grads.inputs;
  const CriticPass pj = run_critic(critic, j_in, keep);
  const CriticPass ps = run_critic(critic, s_in, keep);
  const Vector clipped = ps.t.cwiseMax(-tau).cwiseMin(tau);
  const double lme = log_mean_exp(clipped);

  ObjectiveResult r;
  r.estimate = finite_or_throw(pj.t.mean() - lme, "smile_objective");
  if (!keep) return r;

  const auto n = static_cast<double>(joint.size());
  // Jensen-Shannon f-GAN objective E_P[-softplus(-T)] - E_Q[softplus(T)]
  // supplies the gradients; the clipped DV value is only reported.
  Batch gj(joint.size(), 1);
  Batch gs(joint.size(), 1);
  for (Eigen::Index i = 0; i < joint.size(); ++i) {
    gj(i, 0) = sigmoid(-pj.t(i)) / n;
    gs(i, 0) = -sigmoid(ps.t(i)) / n;
  }
  BackwardResult bj = backward(critic, pj.cache, gj);
  BackwardResult bs = backward(critic, ps.cache, gs);
  if (grads.critic) {
    bj.params += bs.params;
    r.critic_grads.push_back(std::move(bj.params));
  }
  if (grads.inputs) {
    init_input_grads(r, joint);
    route_pair_grads(bj.input, joint.x.cols(), nullptr, 1.0, r.grad_x, r.grad_z);
    route_pair_grads(bs.input, joint.x.cols(), &shuffled.perm, 1.0, r.grad_x, r.grad_z);
  }
  return r;
}

ObjectiveResult infonce_objective(const Network& critic, const PairBatch& joint,
                                  GradRequest grads) {
  check_joint(joint, "infonce_objective");
  const Eigen::Index k = joint.size();
  if (k < 2) throw std::invalid_argument("infonce_objective: need K >= 2");
  const Eigen::Index dx = joint.x.cols();
  const Eigen::Index dz = joint.z.cols();
  check_critic(critic, dx + dz, "infonce_objective");

  // Row i*K + j holds the pairing (x_j, z_i).
  Batch grid(k * k, dx + dz);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      grid.row(i * k + j) << joint.x.row(j), joint.z.row(i);
    }
  }
  const bool keep = grads.critic || grads.inputs;
  // The K^2 grid is too large to cache whole; forward it in chunks here and
  // recompute each chunk's activations in the reverse pass.
  const CriticPass pass = run_critic(critic, grid, false);

  ObjectiveResult r;
  const double log_k = std::log(static_cast<double>(k));
  Batch g(k * k, 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const Vector row = pass.t.segment(i * k, k);
    const double m = row.maxCoeff();
    const Eigen::ArrayXd w = (row.array() - m).exp();
    const double lse = m + std::log(w.sum());
    total += row(i) - lse + log_k;
    const Eigen::ArrayXd softmax = w / w.sum();
    for (Eigen::Index j = 0; j < k; ++j) {
      g(i * k + j, 0) = ((i == j ? 1.0 : 0.0) - softmax(j)) / static_cast<double>(k);
    }
  }
  r.estimate = finite_or_throw(total / static_cast<double>(k), "infonce_objective");
  if (!keep) return r;

  if (grads.critic) r.critic_grads.push_back(Gradients::zeros_like(critic));
  if (grads.inputs) init_input_grads(r, joint);
  for (Eigen::Index start = 0; start < grid.rows(); start += kTrainChunk) {
    const Eigen::Index n = std::min(kTrainChunk, grid.rows() - start);
    const ForwardCache cache = forward_cached(critic, grid.middleRows(start, n));
    BackwardResult b = backward(critic, cache, g.middleRows(start, n));
    if (grads.critic) r.critic_grads.front() += b.params;
    if (!grads.inputs) continue;
    for (Eigen::Index row = start; row < start + n; ++row) {
      r.grad_x.row(row % k) += b.input.row(row - start).head(dx);
      r.grad_z.row(row / k) += b.input.row(row - start).tail(dz);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// chi^2 machinery

Chi2Divergences histogram_chi2(const Batch& p_samples, const Batch& q_samples, int bins) {
  if (p_samples.size() == 0 || q_samples.size() == 0) {
    throw std::invalid_argument("histogram_chi2: empty sample set");
  }
  if (p_samples.cols() != 1 || q_samples.cols() != 1) {
    throw std::invalid_argument("histogram_chi2: one-dimensional samples required");
  }
  if (bins < 2) throw std::invalid_argument("histogram_chi2: need at least 2 bins");

  double lo = std::min(p_samples.minCoeff(), q_samples.minCoeff());
  double hi = std::max(p_samples.maxCoeff(), q_samples.maxCoeff());
  double range = hi - lo;
  if (!(range > 0.0)) range = 1.0;
  lo -= 0.01 * range;
  hi += 0.01 * range;
  const double width = (hi - lo) / bins;

  auto histogram = [&](const Batch& s) {
    Eigen::ArrayXd counts = Eigen::ArrayXd::Zero(bins);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const auto b = static_cast<int>(std::floor((s(i, 0) - lo) / width));
      counts(std::clamp(b, 0, bins - 1)) += 1.0;
    }
    return counts / static_cast<double>(s.rows());
  };
  const Eigen::ArrayXd p = histogram(p_samples);
  const Eigen::ArrayXd q = histogram(q_samples);
  const double p_floor = 0.5 / static_cast<double>(p_samples.rows());
  const double q_floor = 0.5 / static_cast<double>(q_samples.rows());

  Chi2Divergences out;
  for (int b = 0; b < bins; ++b) {
    if (p(b) == 0.0 && q(b) == 0.0) continue;
    const double diff2 = (p(b) - q(b)) * (p(b) - q(b));
    out.p_given_q += diff2 / (q(b) > 0.0 ? q(b) : q_floor);
    out.q_given_p += diff2 / (p(b) > 0.0 ? p(b) : p_floor);
  }
  return out;
}

double chi2_kl_upper(double chi2_pq, double chi2_qp) {
  const double first = std::log1p(chi2_pq);
  const double denom = (1.0 + chi2_qp) * (1.0 + chi2_pq) * (1.0 + chi2_pq) - 1.0;
  if (denom < 1e-12) return first;
  return first - 1.5 * chi2_pq * chi2_pq / denom;
}

double chi2_upper_bound(const Batch& p_samples, const Batch& q_samples, int bins) {
  const Chi2Divergences c = histogram_chi2(p_samples, q_samples, bins);
  return chi2_kl_upper(c.p_given_q, c.q_given_p);
}

// ---------------------------------------------------------------------------
// Reference-based estimators

ObjectiveResult chi_square_mi_lower(const Network& critic, const PairBatch& joint,
                                    const ReferenceDistribution& x_reference,
                                    const ReferenceDistribution& z_reference, double alpha,
                                    int bins, Rng& rng, GradRequest grads,
                                    ChiSquareTerms* terms) {
  if (!(alpha > 0.0)) throw std::invalid_argument("chi_square_mi_lower: alpha must be > 0");
  check_joint(joint, "chi_square_mi_lower");
  x_reference.check_covers(joint.x);
  z_reference.check_covers(joint.z);
  check_critic(critic, joint.x.cols() + joint.z.cols(), "chi_square_mi_lower");

  const Eigen::Index n = joint.size();
  PairBatch ref;
  ref.x = x_reference.sample(n, rng);
  ref.z = z_reference.sample(n, rng);

  const bool keep = grads.critic || grads.inputs;
  const CriticPass pj = run_critic(critic, joint.joined(), keep);
  const CriticPass pr = run_critic(critic, ref.joined(), grads.critic);
  if (pr.t.maxCoeff() > kExpLimit) throw NumericError("chi_square_mi_lower: exp(T) overflows");

  ChiSquareTerms t;
  t.tuba = pj.t.mean() - pr.t.array().exp().mean() / alpha - std::log(alpha) + 1.0;
  t.x_upper = chi2_upper_bound(joint.x, ref.x, bins);
  t.z_upper = chi2_upper_bound(joint.z, ref.z, bins);
  if (terms != nullptr) *terms = t;

  ObjectiveResult r;
  r.estimate = finite_or_throw(t.tuba - t.x_upper - t.z_upper, "chi_square_mi_lower");
  if (!keep) return r;

  const auto nd = static_cast<double>(n);
  const Batch gj = Batch::Constant(n, 1, 1.0 / nd);
  BackwardResult bj = backward(critic, pj.cache, gj);
  if (grads.critic) {
    const Batch gr = -(pr.t.array().exp() / (alpha * nd)).matrix();
    bj.params += backward(critic, pr.cache, gr).params;
    r.critic_grads.push_back(std::move(bj.params));
  }
  if (grads.inputs) {
    init_input_grads(r, joint);
    route_pair_grads(bj.input, joint.x.cols(), nullptr, 1.0, r.grad_x, r.grad_z);
  }
  return r;
}

ObjectiveResult entropy_based_objective(const Network& marginal_critic,
                                        const Network& joint_critic, const PairBatch& joint,
                                        const ReferenceDistribution& z_reference, Rng& rng,
                                        GradRequest grads, EntropyTerms* terms,
                                        EntropyEmaState* ema, double ema_rate) {
  check_joint(joint, "entropy_based_objective");
  z_reference.check_covers(joint.z);
  const Eigen::Index dx = joint.x.cols();
  check_critic(marginal_critic, joint.z.cols(), "entropy_based_objective");
  check_critic(joint_critic, dx + joint.z.cols(), "entropy_based_objective");

  const Eigen::Index n = joint.size();
  const Batch z_ref = z_reference.sample(n, rng);
  PairBatch negatives{joint.x, z_ref};

  const bool keep = grads.critic || grads.inputs;
  const CriticPass m_pos = run_critic(marginal_critic, joint.z, keep);
  const CriticPass m_neg = run_critic(marginal_critic, z_ref, grads.critic);
  const CriticPass j_pos = run_critic(joint_critic, joint.joined(), keep);
  const CriticPass j_neg = run_critic(joint_critic, negatives.joined(), keep);

  const double m_lme = log_mean_exp(m_neg.t);
  const double j_lme = log_mean_exp(j_neg.t);
  EntropyTerms t;
  t.marginal_kl = m_pos.t.mean() - m_lme;
  t.conditional_kl = j_pos.t.mean() - j_lme;
  if (terms != nullptr) *terms = t;

  ObjectiveResult r;
  r.estimate = finite_or_throw(t.conditional_kl - t.marginal_kl, "entropy_based_objective");
  const double m_log_den =
      advance_ema(ema ? &ema->marginal : nullptr, ema_rate, m_lme, "entropy_based_objective");
  const double j_log_den =
      advance_ema(ema ? &ema->joint : nullptr, ema_rate, j_lme, "entropy_based_objective");
  if (!keep) return r;

  const auto nd = static_cast<double>(n);
  const Batch pos = Batch::Constant(n, 1, 1.0 / nd);
  const Batch j_neg_g = -((j_neg.t.array() - j_log_den).exp() / nd).matrix();

  BackwardResult bm = backward(marginal_critic, m_pos.cache, pos);
  BackwardResult bj = backward(joint_critic, j_pos.cache, pos);
  BackwardResult bjn = backward(joint_critic, j_neg.cache, j_neg_g);
  if (grads.critic) {
    const Batch m_neg_g = -((m_neg.t.array() - m_log_den).exp() / nd).matrix();
    bm.params += backward(marginal_critic, m_neg.cache, m_neg_g).params;
    bj.params += bjn.params;
    r.critic_grads.push_back(std::move(bm.params));
    r.critic_grads.push_back(std::move(bj.params));
  }
  if (grads.inputs) {
    init_input_grads(r, joint);
    route_pair_grads(bj.input, dx, nullptr, 1.0, r.grad_x, r.grad_z);
    // Negatives pair each x with a reference draw; only the x part depends
    // on the data.
    r.grad_x += bjn.input.leftCols(dx);
    r.grad_z -= bm.input;
  }
  return r;
}

// ---------------------------------------------------------------------------

std::string_view to_string(EstimatorMethod method) {
  switch (method) {
    case EstimatorMethod::mine:
      return "mine";
    case EstimatorMethod::smile:
      return "smile";
    case EstimatorMethod::infonce:
      return "infonce";
    case EstimatorMethod::chi_square:
      return "chi_square";
    case EstimatorMethod::entropy_based:
      return "entropy_based";
  }
  return "?";
}

EstimatorMethod parse_estimator_method(std::string_view name) {
  if (name == "mine") return EstimatorMethod::mine;
  if (name == "smile") return EstimatorMethod::smile;
  if (name == "infonce") return EstimatorMethod::infonce;
  if (name == "chi_square") return EstimatorMethod::chi_square;
  if (name == "entropy_based" || name == "dine") return EstimatorMethod::entropy_based;
  throw std::invalid_argument("unknown estimator '" + std::string(name) + "'");
}

void EstimatorSpec::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("estimator: tau must be > 0");
  if (!(alpha > 0.0)) throw std::invalid_argument("estimator: alpha must be > 0");
  if (!(ema_rate > 0.0 && ema_rate < 1.0)) {
    throw std::invalid_argument("estimator: ema_rate must lie in (0, 1)");
  }
  if (hist_bins < 2) throw std::invalid_argument("estimator: hist_bins must be >= 2");
  if (hidden.empty()) throw std::invalid_argument("estimator: need at least one hidden layer");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("estimator: hidden widths must be positive");
  }
}

namespace {

std::vector<int> critic_dims(int in_dim, const std::vector<int>& hidden) {
  std::vector<int> dims{in_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  return dims;
}

ReferenceDistribution matched_reference(ReferenceFamily family, const Batch& samples) {
  return family == ReferenceFamily::gaussian ? ReferenceDistribution::matched_gaussian(samples)
                                             : ReferenceDistribution::matched_uniform(samples);
}

}  // namespace

MiEstimator::MiEstimator(EstimatorSpec spec, int x_dim, int z_dim, Rng& rng)
    : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.method == EstimatorMethod::entropy_based) {
    critics_.push_back(init_network(critic_dims(z_dim, spec_.hidden), rng));
  }
  critics_.push_back(init_network(critic_dims(x_dim + z_dim, spec_.hidden), rng));
  for (const Network& c : critics_) adam_.push_back(AdamState::for_network(c));
}

ObjectiveResult MiEstimator::evaluate(const PairBatch& joint, Rng& rng, bool input_grads) {
  const GradRequest g{true, input_grads};
  switch (spec_.method) {
    case EstimatorMethod::mine:
      return mine_objective(critics_[0], joint, shuffle_marginals(joint, rng), &ema_,
                            spec_.ema_rate, g);
    case EstimatorMethod::smile:
      return smile_objective(critics_[0], joint, shuffle_marginals(joint, rng), spec_.tau, g);
    case EstimatorMethod::infonce:
      return infonce_objective(critics_[0], joint, g);
    case EstimatorMethod::chi_square:
      return chi_square_mi_lower(critics_[0], joint, matched_reference(spec_.reference, joint.x),
                                 matched_reference(spec_.reference, joint.z), spec_.alpha,
                                 spec_.hist_bins, rng, g);
    case EstimatorMethod::entropy_based:
      return entropy_based_objective(critics_[0], critics_[1], joint,
                                     matched_reference(spec_.reference, joint.z), rng, g, nullptr,
                                     &dine_ema_, spec_.ema_rate);
  }
  throw std::logic_error("MiEstimator: unhandled method");
}

double MiEstimator::estimate(const PairBatch& joint, Rng& rng, Eigen::Index chunk) const {
  const GradRequest none{false, false};
  switch (spec_.method) {
    case EstimatorMethod::mine:
      return mine_objective(critics_[0], joint, shuffle_marginals(joint, rng), nullptr,
                            spec_.ema_rate, none)
          .estimate;
    case EstimatorMethod::smile:
      return smile_objective(critics_[0], joint, shuffle_marginals(joint, rng), spec_.tau, none)
          .estimate;
    case EstimatorMethod::infonce: {
      if (chunk < 2) throw std::invalid_argument("MiEstimator::estimate: chunk must be >= 2");
      double total = 0.0;
      int count = 0;
      for (Eigen::Index start = 0; start + chunk <= joint.size(); start += chunk) {
        PairBatch part{joint.x.middleRows(start, chunk), joint.z.middleRows(start, chunk)};
        total += infonce_objective(critics_[0], part, none).estimate;
        ++count;
      }
      if (count == 0) return infonce_objective(critics_[0], joint, none).estimate;
      return total / count;
    }
    case EstimatorMethod::chi_square:
      return chi_square_mi_lower(critics_[0], joint, matched_reference(spec_.reference, joint.x),
                                 matched_reference(spec_.reference, joint.z), spec_.alpha,
                                 spec_.hist_bins, rng, none)
          .estimate;
    case EstimatorMethod::entropy_based:
      return entropy_based_objective(critics_[0], critics_[1], joint,
                                     matched_reference(spec_.reference, joint.z), rng, none)
          .estimate;
  }
  throw std::logic_error("MiEstimator: unhandled method");
}

bool MiEstimator::update(const ObjectiveResult& result, double lr, double grad_clip) {
  if (result.critic_grads.size() != critics_.size()) {
    throw std::invalid_argument("MiEstimator::update: gradient count mismatch");
  }
  bool all_applied = true;
  for (std::size_t k = 0; k < critics_.size(); ++k) {
    Gradients loss_grad = result.critic_grads[k];
    loss_grad *= -1.0;
    try {
      if (grad_clip > 0.0) loss_grad = clip_gradient_norm(std::move(loss_grad), grad_clip);
      adam_step(critics_[k], loss_grad, adam_[k], lr);
    } catch (const NumericError&) {
      all_applied = false;
    }
  }
  return all_applied;
}

}  // namespace ncap
