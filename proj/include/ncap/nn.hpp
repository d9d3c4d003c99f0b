#pragma once

// Minimal fully-connected network engine: forward/backward passes over
// batches, Adam, global-norm clipping and a seeded Gaussian source.
//
// Batches are B x d matrices (one sample per row). Internally activations
// are kept feature-major (d x B) so each layer is a single GEMM.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

namespace ncap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// B x d sample batch, one sample per row.
using Batch = Eigen::MatrixXd;

/// 64-bit mixing function used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seeded random source. Copies share nothing; identical seeds give
/// identical streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t next_u64() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

  /// Independent child stream; does not advance this generator.
  Rng derive(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x9e3779b97f4a7c15ULL)));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// i.i.d. N(0, 1) entries.
Batch sample_gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols);

/// MLP with ReLU hidden layers and a linear output layer.
struct Network {
  std::vector<int> layer_dims;
  std::vector<Matrix> weights;  // weights[k]: layer_dims[k+1] x layer_dims[k]
  std::vector<Vector> biases;   // biases[k]:  layer_dims[k+1]

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return weights.size(); }
  Eigen::Index num_parameters() const;
  bool all_finite() const;
};

/// He-initialized network (N(0, 2/fan_in) weights, zero biases).
Network init_network(std::span<const int> layer_dims, Rng& rng);
inline Network init_network(std::initializer_list<int> layer_dims, Rng& rng) {
  return init_network(std::span<const int>(layer_dims.begin(), layer_dims.size()), rng);
}

/// Parameter-shaped container for gradients and optimizer moments.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static Gradients zeros_like(const Network& net);

  double squared_norm() const;
  double norm() const;
  bool all_finite() const;
  Gradients& operator*=(double c);
  Gradients& operator+=(const Gradients& other);
};

/// Activations retained by a forward pass for the reverse sweep.
struct ForwardCache {
  // activations[0] is the input (d x B); activations[k] the output of layer k
  // after its nonlinearity; the final entry is the network output.
  std::vector<Matrix> activations;

  Batch output() const { return activations.back().transpose(); }
};

Batch forward(const Network& net, const Batch& batch);
ForwardCache forward_cached(const Network& net, const Batch& batch);

struct BackwardResult {
  Gradients params;
  Batch input;  // d(sum out_grad * out)/d(input), B x input_dim
};

/// Reverse-mode pass: gradient of sum_ij output_grads(i,j) * out(i,j).
BackwardResult backward(const Network& net, const ForwardCache& cache,
                        const Batch& output_grads);
BackwardResult backward(const Network& net, const Batch& batch, const Batch& output_grads);
/// Input gradient only; skips the weight-gradient products.
Batch backward_input(const Network& net, const ForwardCache& cache, const Batch& output_grads);

struct AdamState {
  Gradients first_moment;
  Gradients second_moment;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_network(const Network& net);
};

/// One Adam descent step on `net` along `grads` (gradients of a loss).
/// Throws NumericError on non-finite gradients without touching state.
void adam_step(Network& net, const Gradients& grads, AdamState& state, double lr);

/// Rescales all gradients so their global L2 norm is at most max_norm.
Gradients clip_gradient_norm(Gradients grads, double max_norm);

// Checkpoint text format: header "ncap-network v1", the layer dims, then for
// each layer "W <k> <rows> <cols>" / "b <k> <len>" followed by row-major
// values printed with 17 significant digits.
void save_network(std::ostream& os, const Network& net);
Network load_network(std::istream& is);

}  // namespace ncap
