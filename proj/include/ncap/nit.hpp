#pragma once

// Neural input transformer: pushes standard Gaussian noise through an MLP
// and a differentiable constraint layer to produce feasible channel inputs.

#include "ncap/channels.hpp"
#include "ncap/nn.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace ncap {

enum class TransformMode { train, eval };

/// Floor on the batch second moment in the power normalization.
inline constexpr double kPowerFloor = 1e-12;

struct InputTransformer {
  Network net;
  ConstraintSpec constraint;
  /// Frozen power-normalization scale used in eval mode.
  std::optional<double> eval_scale;
};

/// 1 -> 64 x 4 -> 1 network, the default transformer architecture.
InputTransformer make_input_transformer(const ConstraintSpec& constraint, Rng& rng,
                                        const std::vector<int>& hidden = {64, 64, 64, 64});

/// Intermediates of the constraint layer needed for the reverse pass.
struct TransformCache {
  ForwardCache net_cache;
  Batch raw;       // network output
  Batch shaped;    // after |.| (nonneg) or equal to raw
  double scale = 1.0;
  double second_moment = 0.0;  // mean(shaped^2) when normalizing
  bool scale_is_batch_stat = false;
};

/// Train mode normalizes power with the batch second moment; eval mode uses
/// the frozen scale (falls back to the batch statistic when none is set).
Batch transform(const InputTransformer& nit, const Batch& noise, TransformMode mode,
                TransformCache* cache = nullptr);

/// Parameter gradients of sum(grad_x * x) through the constraint layer.
Gradients transform_backward(const InputTransformer& nit, const TransformCache& cache,
                             const Batch& grad_x);

/// Freezes the power-normalization scale from `calibration_samples` noise
/// draws. No-op for the peak constraint.
void calibrate(InputTransformer& nit, Eigen::Index calibration_samples, Rng& rng);

struct InputHistogram {
  std::vector<double> edges;  // bins + 1 equal-width edges
  std::vector<long long> counts;
  std::vector<double> density;  // counts / (n * width)

  std::size_t bins() const { return counts.size(); }
  long long total() const;
  void write_csv(std::ostream& os) const;
};

/// Equal-width histogram over the observed range of `samples` (B x 1).
InputHistogram make_histogram(const Batch& samples, int bins);

/// Histogram of n_samples eval-mode transformer outputs.
InputHistogram extract_histogram(const InputTransformer& nit, Eigen::Index n_samples, int bins,
                                 Rng& rng);

/// A cluster is a maximal run of bins with density >= `peak_fraction` of the
/// maximum; runs are merged unless a bin below `gap_fraction` of the maximum
/// separates them.
struct Cluster {
  std::size_t first_bin = 0;
  std::size_t last_bin = 0;
  double left = 0.0;
  double right = 0.0;
  double mass = 0.0;  // fraction of samples between left and right
};

std::vector<Cluster> find_clusters(const InputHistogram& hist, double peak_fraction = 0.05,
                                   double gap_fraction = 0.01);

}  // namespace ncap
