#include "ncap/nn.hpp"

#include "ncap/errors.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ncap {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Batch sample_gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("sample_gaussian: rows and cols must be >= 1");
  }
  Batch out(rows, cols);
  // Fill row by row so a B x 1 batch and the first B rows of a larger draw agree.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = rng.gaussian();
  }
  return out;
}

Eigen::Index Network::num_parameters() const {
  Eigen::Index n = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) n += weights[k].size() + biases[k].size();
  return n;
}

bool Network::all_finite() const {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!weights[k].allFinite() || !biases[k].allFinite()) return false;
  }
  return true;
}

Network init_network(std::span<const int> layer_dims, Rng& rng) {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("init_network: need at least input and output dims");
  }
  for (int d : layer_dims) {
    if (d < 1) throw std::invalid_argument("init_network: layer dims must be positive");
  }
  Network net;
  net.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  for (std::size_t k = 0; k + 1 < layer_dims.size(); ++k) {
    const int fan_in = layer_dims[k];
    const int fan_out = layer_dims[k + 1];
    const double scale = std::sqrt(2.0 / fan_in);
    Matrix w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = scale * rng.gaussian();
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(fan_out));
  }
  return net;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    g.weights.push_back(Matrix::Zero(net.weights[k].rows(), net.weights[k].cols()));
    g.biases.push_back(Vector::Zero(net.biases[k].size()));
  }
  return g;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    s += weights[k].squaredNorm() + biases[k].squaredNorm();
  }
  return s;
}

double Gradients::norm() const { return std::sqrt(squared_norm()); }

bool Gradients::all_finite() const {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!weights[k].allFinite() || !biases[k].allFinite()) return false;
  }
  return true;
}

Gradients& Gradients::operator*=(double c) {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] *= c;
    biases[k] *= c;
  }
  return *this;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.weights.size() != weights.size()) {
    throw std::invalid_argument("Gradients: layer count mismatch");
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] += other.weights[k];
    biases[k] += other.biases[k];
  }
  return *this;
}

namespace {

void check_input(const Network& net, const Batch& batch) {
  if (batch.cols() != net.input_dim()) {
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols()) +
                                " columns, network expects " +
                                std::to_string(net.input_dim()));
  }
  if (batch.rows() < 1) throw std::invalid_argument("forward: empty batch");
}

}  // namespace

Batch forward(const Network& net, const Batch& batch) {
  check_input(net, batch);
  Matrix h = batch.transpose();
  const std::size_t last = net.num_layers() - 1;
  for (std::size_t k = 0; k <= last; ++k) {
    Matrix next = net.weights[k] * h;
    next.colwise() += net.biases[k];
    if (k != last) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h.transpose();
}

ForwardCache forward_cached(const Network& net, const Batch& batch) {
  check_input(net, batch);
  ForwardCache cache;
  cache.activations.reserve(net.num_layers() + 1);
  cache.activations.push_back(batch.transpose());
  const std::size_t last = net.num_layers() - 1;
  for (std::size_t k = 0; k <= last; ++k) {
    Matrix next = net.weights[k] * cache.activations.back();
    next.colwise() += net.biases[k];
    if (k != last) next = next.cwiseMax(0.0);
    cache.activations.push_back(std::move(next));
  }
  return cache;
}

namespace {

BackwardResult reverse_sweep(const Network& net, const ForwardCache& cache,
                             const Batch& output_grads, bool with_params) {
  const Matrix& out = cache.activations.back();
  if (output_grads.rows() != out.cols() || output_grads.cols() != out.rows()) {
    throw std::invalid_argument("backward: output_grads shape does not match forward output");
  }
  BackwardResult result;
  if (with_params) {
    result.params.weights.resize(net.num_layers());
    result.params.biases.resize(net.num_layers());
  }

  Matrix delta = output_grads.transpose();  // out_dim x B
  for (std::size_t k = net.num_layers(); k-- > 0;) {
    const Matrix& in = cache.activations[k];
    if (with_params) {
      result.params.weights[k].noalias() = delta * in.transpose();
      result.params.biases[k] = delta.rowwise().sum();
    }
    Matrix prev = net.weights[k].transpose() * delta;
    if (k > 0) {
      // ReLU mask: activation > 0 exactly where the pre-activation was positive.
      prev = prev.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
    }
    delta = std::move(prev);
  }
  result.input = delta.transpose();
  return result;
}

}  // namespace

BackwardResult backward(const Network& net, const ForwardCache& cache,
                        const Batch& output_grads) {
  return reverse_sweep(net, cache, output_grads, true);
}

Batch backward_input(const Network& net, const ForwardCache& cache, const Batch& output_grads) {
  return reverse_sweep(net, cache, output_grads, false).input;
}

BackwardResult backward(const Network& net, const Batch& batch, const Batch& output_grads) {
  return backward(net, forward_cached(net, batch), output_grads);
}

AdamState AdamState::for_network(const Network& net) {
  AdamState s;
  s.first_moment = Gradients::zeros_like(net);
  s.second_moment = Gradients::zeros_like(net);
  return s;
}

void adam_step(Network& net, const Gradients& grads, AdamState& state, double lr) {
  if (lr < 0.0 || !std::isfinite(lr)) throw std::invalid_argument("adam_step: lr must be >= 0");
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");
  if (grads.weights.size() != net.num_layers()) {
    throw std::invalid_argument("adam_step: gradient layout does not match network");
  }
  if (state.first_moment.weights.empty()) state = AdamState::for_network(net);

  state.step_count += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));

  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    update(net.weights[k], grads.weights[k], state.first_moment.weights[k],
           state.second_moment.weights[k]);
    update(net.biases[k], grads.biases[k], state.first_moment.biases[k],
           state.second_moment.biases[k]);
  }
}

Gradients clip_gradient_norm(Gradients grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradient_norm: max_norm must be > 0");
  const double n = grads.norm();
  if (n > max_norm) grads *= max_norm / n;
  return grads;
}

void save_network(std::ostream& os, const Network& net) {
  os << "ncap-network v1\n" << net.layer_dims.size();
  for (int d : net.layer_dims) os << ' ' << d;
  os << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const Matrix& w = net.weights[k];
    os << "W " << k << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) os << (c ? " " : "") << w(r, c);
      os << '\n';
    }
    const Vector& b = net.biases[k];
    os << "b " << k << ' ' << b.size() << '\n';
    for (Eigen::Index i = 0; i < b.size(); ++i) os << (i ? " " : "") << b(i);
    os << '\n';
  }
}

Network load_network(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "ncap-network" || version != "v1") {
    throw std::invalid_argument("load_network: bad header");
  }
  std::size_t n_dims = 0;
  is >> n_dims;
  std::vector<int> dims(n_dims);
  for (auto& d : dims) is >> d;
  Rng unused(0);
  Network net = init_network(dims, unused);
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    std::string tag;
    std::size_t idx = 0;
    Eigen::Index rows = 0, cols = 0;
    is >> tag >> idx >> rows >> cols;
    if (tag != "W" || idx != k || rows != net.weights[k].rows() || cols != net.weights[k].cols()) {
      throw std::invalid_argument("load_network: malformed weight block " + std::to_string(k));
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) is >> net.weights[k](r, c);
    }
    Eigen::Index len = 0;
    is >> tag >> idx >> len;
    if (tag != "b" || idx != k || len != net.biases[k].size()) {
      throw std::invalid_argument("load_network: malformed bias block " + std::to_string(k));
    }
    for (Eigen::Index i = 0; i < len; ++i) is >> net.biases[k](i);
  }
  if (!is) throw std::invalid_argument("load_network: truncated input");
  return net;
}

}  // namespace ncap
