#include "ncap/errors.hpp"
#include "ncap/reference.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace ncap;

namespace {

double binary_entropy(double p) { return -p * std::log(p) - (1 - p) * std::log(1 - p); }

DiscreteChannel symmetric_channel(double flip) {
  DiscreteChannel dc;
  dc.input_grid = {0.0, 1.0};
  dc.output_grid = {0.0, 1.0};
  dc.transition.resize(2, 2);
  dc.transition << 1 - flip, flip, flip, 1 - flip;
  return dc;
}

}  // namespace

TEST(Awgn, ClosedForm) {
  EXPECT_DOUBLE_EQ(awgn_capacity(0.0), 0.0);
  EXPECT_NEAR(awgn_capacity(100.0), 0.5 * std::log(101.0), 1e-15);
  EXPECT_THROW(awgn_capacity(-1.0), std::invalid_argument);
}

TEST(BlahutArimoto, BinarySymmetricChannel) {
  const BlahutArimotoResult r = blahut_arimoto(symmetric_channel(0.11), std::nullopt, 1e-12);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.capacity, std::log(2.0) - binary_entropy(0.11), 1e-9);
  EXPECT_NEAR(r.input_pmf(0), 0.5, 1e-6);
}

TEST(BlahutArimoto, ZChannelOptimum) {
  // Z channel with crossover q: the optimal P(1) = 1 / ((1-q)(1 + e^{h(q)/(1-q)})).
  const double q = 0.3;
  DiscreteChannel dc;
  dc.input_grid = {0.0, 1.0};
  dc.output_grid = {0.0, 1.0};
  dc.transition.resize(2, 2);
  dc.transition << 1, 0, q, 1 - q;
  const double p1 = 1.0 / ((1 - q) * (1 + std::exp(binary_entropy(q) / (1 - q))));
  const double y1 = p1 * (1 - q);
  const double cap = binary_entropy(y1) - p1 * binary_entropy(q);
  const BlahutArimotoResult r = blahut_arimoto(dc, std::nullopt, 1e-12);
  EXPECT_NEAR(r.capacity, cap, 1e-9);
  EXPECT_NEAR(r.input_pmf(1), p1, 1e-5);
}

TEST(BlahutArimoto, PowerConstrainedAwgnApproachesClosedForm) {
  const ChannelSpec ch{ChannelKind::awgn, 1.0, 0.0};
  const ConstraintSpec c = ConstraintSpec::average_power(snr_to_power(2.0, 1.0));
  const DiscreteChannel dc = discretize_channel(ch, c, 201, 600);
  const BlahutArimotoResult r = blahut_arimoto(dc, c.power);
  EXPECT_LE(r.second_moment, c.power * (1 + 1e-9));
  EXPECT_NEAR(r.capacity, awgn_capacity(c.power), 0.01);
}

TEST(BlahutArimoto, RejectsBadArguments) {
  const DiscreteChannel dc = symmetric_channel(0.2);
  EXPECT_THROW(blahut_arimoto(dc, std::nullopt, 0.0), std::invalid_argument);
  EXPECT_THROW(blahut_arimoto(dc, -1.0), std::invalid_argument);
  DiscreteChannel bad = dc;
  bad.transition(0, 0) = 0.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Discretize, RowsAreDistributionsAndSupportsMatch) {
  const ChannelSpec ch{ChannelKind::optical_intensity, 1.0, 0.0};
  const ConstraintSpec c = ConstraintSpec::nonneg_average_power(10.0);
  const DiscreteChannel dc = discretize_channel(ch, c, 51, 200);
  EXPECT_NO_THROW(dc.validate());
  EXPECT_DOUBLE_EQ(dc.input_grid.front(), 0.0);
  EXPECT_NEAR(dc.input_grid.back(), 4.0 * std::sqrt(10.0), 1e-12);
  const ChannelSpec pk = make_channel(ChannelKind::peak_awgn, 6.0, 1.0);
  const DiscreteChannel dp = discretize_channel(pk, default_constraint(ChannelKind::peak_awgn, 6.0, 1.0), 11, 50);
  EXPECT_NEAR(dp.input_grid.front(), -pk.peak_amplitude, 1e-12);
  EXPECT_NEAR(dp.input_grid.back(), pk.peak_amplitude, 1e-12);
}

TEST(MutualInformation, UniformInputOnSymmetricChannel) {
  Vector p(2);
  p << 0.5, 0.5;
  EXPECT_NEAR(mutual_information(symmetric_channel(0.2), p), std::log(2.0) - binary_entropy(0.2), 1e-12);
  p << 1.0, 0.0;
  EXPECT_NEAR(mutual_information(symmetric_channel(0.2), p), 0.0, 1e-12);
}

TEST(Bounds, TableLookup) {
  const CapacityBounds b = literature_bounds(ChannelKind::optical_intensity, 10.0);
  EXPECT_LT(b.lower, b.upper);
  for (double snr : {5.0, 10.0, 15.0, 20.0}) {
    EXPECT_NO_THROW(literature_bounds(ChannelKind::optical_intensity, snr));
  }
  EXPECT_THROW(literature_bounds(ChannelKind::optical_intensity, 12.0), NotFound);
  EXPECT_THROW(literature_bounds(ChannelKind::awgn, 10.0), NotFound);
  std::ostringstream os;
  write_bound_table_csv(os);
  EXPECT_EQ(os.str().rfind("channel,snr_db,lower_nats,upper_nats\n", 0), 0u);
}
