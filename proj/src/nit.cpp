#include "ncap/nit.hpp"

#include "ncap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace ncap {

InputTransformer make_input_transformer(const ConstraintSpec& constraint, Rng& rng,
                                        const std::vector<int>& hidden) {
  constraint.validate();
  std::vector<int> dims{1};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  return InputTransformer{init_network(dims, rng), constraint, std::nullopt};
}

namespace {

bool normalizes_power(const ConstraintSpec& c) { return c.kind != ConstraintKind::peak; }

Batch shape_raw(const ConstraintSpec& c, const Batch& raw) {
  return c.kind == ConstraintKind::nonneg_average_power ? Batch(raw.cwiseAbs()) : raw;
}

double power_scale(double power, double second_moment) {
  if (!(second_moment >= kPowerFloor)) {
    throw NumericError("transform: degenerate (near-zero) batch under power normalization");
  }
  return std::sqrt(power / std::max(second_moment, kPowerFloor));
}

}  // namespace

Batch transform(const InputTransformer& nit, const Batch& noise, TransformMode mode,
                TransformCache* cache) {
  if (noise.cols() != 1 || noise.rows() < 1) {
    throw std::invalid_argument("transform: expected B x 1 noise");
  }
  const ConstraintSpec& c = nit.constraint;
  TransformCache local;
  TransformCache& tc = cache != nullptr ? *cache : local;
  if (cache != nullptr) {
    tc.net_cache = forward_cached(nit.net, noise);
    tc.raw = tc.net_cache.output();
  } else {
    tc.raw = forward(nit.net, noise);
  }

  if (c.kind == ConstraintKind::peak) {
    return c.amplitude * tc.raw.array().tanh().matrix();
  }

  tc.shaped = shape_raw(c, tc.raw);
  tc.second_moment = tc.shaped.squaredNorm() / static_cast<double>(tc.shaped.rows());
  if (mode == TransformMode::eval && nit.eval_scale.has_value()) {
    tc.scale = *nit.eval_scale;
    tc.scale_is_batch_stat = false;
  } else {
    tc.scale = power_scale(c.power, tc.second_moment);
    tc.scale_is_batch_stat = true;
  }
  return tc.scale * tc.shaped;
}

Gradients transform_backward(const InputTransformer& nit, const TransformCache& cache,
                             const Batch& grad_x) {
  if (grad_x.rows() != cache.raw.rows() || grad_x.cols() != 1) {
    throw std::invalid_argument("transform_backward: gradient shape mismatch");
  }
  const ConstraintSpec& c = nit.constraint;
  Batch g_raw;
  if (c.kind == ConstraintKind::peak) {
    const Eigen::ArrayXXd th = cache.raw.array().tanh();
    g_raw = (grad_x.array() * c.amplitude * (1.0 - th * th)).matrix();
  } else {
    Batch g_shaped = cache.scale * grad_x;
    if (cache.scale_is_batch_stat) {
      // d scale / d shaped_i = -(scale / m) * shaped_i / B
      const double n = static_cast<double>(cache.shaped.rows());
      const double coupling = grad_x.cwiseProduct(cache.shaped).sum();
      g_shaped -= (cache.scale / cache.second_moment) * (coupling / n) * cache.shaped;
    }
    if (c.kind == ConstraintKind::nonneg_average_power) {
      g_raw = g_shaped.cwiseProduct(cache.raw.unaryExpr([](double v) {
        return static_cast<double>((v > 0.0) - (v < 0.0));
      }));
    } else {
      g_raw = std::move(g_shaped);
    }
  }
  return backward(nit.net, cache.net_cache, g_raw).params;
}

void calibrate(InputTransformer& nit, Eigen::Index calibration_samples, Rng& rng) {
  if (!normalizes_power(nit.constraint)) return;
  const Batch noise = sample_gaussian(rng, calibration_samples, 1);
  const Batch shaped = shape_raw(nit.constraint, forward(nit.net, noise));
  const double m = shaped.squaredNorm() / static_cast<double>(shaped.rows());
  nit.eval_scale = power_scale(nit.constraint.power, m);
}

long long InputHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), 0LL);
}

void InputHistogram::write_csv(std::ostream& os) const {
  os << "bin_left,bin_right,count,density\n" << std::setprecision(6);
  for (std::size_t b = 0; b < counts.size(); ++b) {
    os << edges[b] << ',' << edges[b + 1] << ',' << counts[b] << ',' << density[b] << '\n';
  }
}

InputHistogram make_histogram(const Batch& samples, int bins) {
  if (samples.cols() != 1 || samples.rows() < 1) {
    throw std::invalid_argument("make_histogram: expected B x 1 samples");
  }
  if (bins < 1) throw std::invalid_argument("make_histogram: bins must be >= 1");
  double lo = samples.minCoeff();
  double hi = samples.maxCoeff();
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / bins;
  InputHistogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) h.edges[static_cast<std::size_t>(b)] = lo + b * width;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    const int b = std::clamp(static_cast<int>(std::floor((samples(i, 0) - lo) / width)), 0, bins - 1);
    h.counts[static_cast<std::size_t>(b)] += 1;
  }
  const double n = static_cast<double>(samples.rows());
  h.density.resize(h.counts.size());
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    h.density[b] = static_cast<double>(h.counts[b]) / (n * width);
  }
  return h;
}

InputHistogram extract_histogram(const InputTransformer& nit, Eigen::Index n_samples, int bins,
                                 Rng& rng) {
  if (n_samples < bins) throw std::invalid_argument("extract_histogram: need n_samples >= bins");
  const Batch noise = sample_gaussian(rng, n_samples, 1);
  return make_histogram(transform(nit, noise, TransformMode::eval), bins);
}

std::vector<Cluster> find_clusters(const InputHistogram& hist, double peak_fraction,
                                   double gap_fraction) {
  std::vector<Cluster> clusters;
  if (hist.counts.empty()) return clusters;
  const double peak = *std::max_element(hist.density.begin(), hist.density.end());
  if (!(peak > 0.0)) return clusters;
  const double high = peak_fraction * peak;
  const double low = gap_fraction * peak;

  std::size_t b = 0;
  const std::size_t n = hist.bins();
  while (b < n) {
    if (hist.density[b] < high) {
      ++b;
      continue;
    }
    std::size_t end = b;
    while (end + 1 < n && hist.density[end + 1] >= high) ++end;
    bool merge = false;
    if (!clusters.empty()) {
      merge = true;
      for (std::size_t k = clusters.back().last_bin + 1; k < b; ++k) {
        if (hist.density[k] < low) {
          merge = false;
          break;
        }
      }
    }
    if (merge) {
      clusters.back().last_bin = end;
    } else {
      clusters.push_back(Cluster{b, end, 0.0, 0.0, 0.0});
    }
    b = end + 1;
  }
  const double total = static_cast<double>(hist.total());
  for (Cluster& c : clusters) {
    c.left = hist.edges[c.first_bin];
    c.right = hist.edges[c.last_bin + 1];
    long long count = 0;
    for (std::size_t k = c.first_bin; k <= c.last_bin; ++k) count += hist.counts[k];
    c.mass = static_cast<double>(count) / total;
  }
  return clusters;
}

}  // namespace ncap
