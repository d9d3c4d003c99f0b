#pragma once

// Memoryless additive Gaussian channels Z = X + N and their input
// constraints.

#include "ncap/nn.hpp"

#include <string>
#include <string_view>

namespace ncap {

enum class ChannelKind { awgn, optical_intensity, peak_awgn };

struct ChannelSpec {
  ChannelKind kind = ChannelKind::awgn;
  double noise_variance = 1.0;
  /// Amplitude bound enforced on inputs of a peak_awgn channel.
  double peak_amplitude = 0.0;

  void validate() const;
};

enum class ConstraintKind { average_power, nonneg_average_power, peak };

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::average_power;
  double power = 1.0;      // second-moment budget E[X^2] <= power
  double amplitude = 0.0;  // |X| <= amplitude (peak)

  static ConstraintSpec average_power(double eps);
  static ConstraintSpec nonneg_average_power(double eps);
  static ConstraintSpec peak(double a);

  void validate() const;
};

/// Slack allowed on constraint checks at the support boundary.
inline constexpr double kConstraintTolerance = 1e-9;

/// z = x + n with n ~ N(0, noise_variance). Inputs violating the channel's
/// input alphabet (negative intensities, |x| > A) are rejected.
Batch transmit(const ChannelSpec& channel, const Batch& x, Rng& rng);

/// Second-moment budget for a given SNR in dB: noise_variance * 10^(snr/10).
double snr_to_power(double snr_db, double noise_variance);

/// The input constraint paired with a channel at a given SNR. For the peak
/// channel A = sqrt(power).
ConstraintSpec default_constraint(ChannelKind kind, double snr_db, double noise_variance);

/// Channel spec at an SNR; fills peak_amplitude for the peak channel.
ChannelSpec make_channel(ChannelKind kind, double snr_db, double noise_variance);

std::string_view to_string(ChannelKind kind);
ChannelKind parse_channel_kind(std::string_view name);

}  // namespace ncap
