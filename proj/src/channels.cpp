#include "ncap/channels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ncap {

void ChannelSpec::validate() const {
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance)) {
    throw std::invalid_argument("channel: noise variance must be positive");
  }
  if (kind == ChannelKind::peak_awgn && !(peak_amplitude > 0.0)) {
    throw std::invalid_argument("channel: peak_awgn needs a positive amplitude");
  }
}

ConstraintSpec ConstraintSpec::average_power(double eps) {
  ConstraintSpec c{ConstraintKind::average_power, eps, 0.0};
  c.validate();
  return c;
}

ConstraintSpec ConstraintSpec::nonneg_average_power(double eps) {
  ConstraintSpec c{ConstraintKind::nonneg_average_power, eps, 0.0};
  c.validate();
  return c;
}

ConstraintSpec ConstraintSpec::peak(double a) {
  ConstraintSpec c{ConstraintKind::peak, a * a, a};
  c.validate();
  return c;
}

void ConstraintSpec::validate() const {
  if (kind == ConstraintKind::peak) {
    if (!(amplitude > 0.0) || !std::isfinite(amplitude)) {
      throw std::invalid_argument("constraint: amplitude must be positive");
    }
  } else if (!(power > 0.0) || !std::isfinite(power)) {
    throw std::invalid_argument("constraint: power must be positive");
  }
}

Batch transmit(const ChannelSpec& channel, const Batch& x, Rng& rng) {
  channel.validate();
  if (x.cols() != 1 || x.rows() < 1) {
    throw std::invalid_argument("transmit: expected a B x 1 input batch");
  }
  if (channel.kind == ChannelKind::optical_intensity &&
      x.minCoeff() < -kConstraintTolerance) {
    throw std::invalid_argument("transmit: negative input on optical intensity channel");
  }
  if (channel.kind == ChannelKind::peak_awgn &&
      x.cwiseAbs().maxCoeff() > channel.peak_amplitude + kConstraintTolerance) {
    throw std::invalid_argument("transmit: input exceeds peak amplitude");
  }
  const double sigma = std::sqrt(channel.noise_variance);
  Batch z = x;
  for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, 0) += sigma * rng.gaussian();
  return z;
}

double snr_to_power(double snr_db, double noise_variance) {
  if (!(noise_variance > 0.0)) throw std::invalid_argument("snr_to_power: noise variance must be > 0");
  return noise_variance * std::pow(10.0, snr_db / 10.0);
}

ConstraintSpec default_constraint(ChannelKind kind, double snr_db, double noise_variance) {
  const double eps = snr_to_power(snr_db, noise_variance);
  switch (kind) {
    case ChannelKind::awgn:
      return ConstraintSpec::average_power(eps);
    case ChannelKind::optical_intensity:
      return ConstraintSpec::nonneg_average_power(eps);
    case ChannelKind::peak_awgn:
      return ConstraintSpec::peak(std::sqrt(eps));
  }
  throw std::invalid_argument("default_constraint: unknown channel kind");
}

ChannelSpec make_channel(ChannelKind kind, double snr_db, double noise_variance) {
  ChannelSpec ch{kind, noise_variance, 0.0};
  if (kind == ChannelKind::peak_awgn) {
    ch.peak_amplitude = std::sqrt(snr_to_power(snr_db, noise_variance));
  }
  ch.validate();
  return ch;
}

std::string_view to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::awgn:
      return "awgn";
    case ChannelKind::optical_intensity:
      return "optical";
    case ChannelKind::peak_awgn:
      return "peak_awgn";
  }
  return "?";
}

ChannelKind parse_channel_kind(std::string_view name) {
  if (name == "awgn") return ChannelKind::awgn;
  if (name == "optical" || name == "optical_intensity") return ChannelKind::optical_intensity;
  if (name == "peak_awgn") return ChannelKind::peak_awgn;
  throw std::invalid_argument("unknown channel '" + std::string(name) + "'");
}

}  // namespace ncap
