#include "rissim/detection.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "rissim/geometry.hpp"

namespace {

using rissim::AggregateMetrics;
using rissim::classify_spaces;
using rissim::classify_units;
using rissim::compute_metrics;
using rissim::CVector;
using rissim::Complex;
using rissim::DetectionConfig;
using rissim::MetricsReport;
using rissim::OccupancyImage;
using rissim::ParkingLayout;
using rissim::RVector;

TEST(ClassifyUnits, StrictWindowOnRealPart) {
  CVector image(7);
  image << Complex(0.40, 0.0),   // inside
      Complex(0.25, 0.0),        // left edge: excluded
      Complex(0.55, 0.0),        // right edge: excluded
      Complex(0.2500001, 0.0),   // barely inside
      Complex(-0.40, 0.0),       // negative
      Complex(0.40, 5.0),        // imaginary part is ignored
      Complex(0.0, 0.0);
  const OccupancyImage occupancy = classify_units(image, DetectionConfig{});
  const std::vector<std::uint8_t> expect{1, 0, 0, 1, 0, 1, 0};
  EXPECT_EQ(occupancy.units, expect);
}

TEST(ClassifyUnits, RejectsInvertedThresholds) {
  DetectionConfig cfg;
  cfg.tau1 = 0.6;
  cfg.tau2 = 0.55;
  EXPECT_THROW(classify_units(CVector::Zero(3), cfg), std::invalid_argument);
  cfg.tau1 = cfg.tau2;
  EXPECT_THROW(classify_units(CVector::Zero(3), cfg), std::invalid_argument);
}

ParkingLayout two_space_layout() {
  // 1x4 column grid, no lanes: two spaces of two units each.
  return rissim::build_parking_layout(rissim::build_grid(1, 4, 1.0, {}), {});
}

TEST(ClassifySpaces, MajorityRuleAtHalf) {
  const ParkingLayout layout = two_space_layout();
  OccupancyImage image;
  image.units = {1, 1, 1, 0};  // space 0 fully flagged, space 1 half flagged
  const auto occupied = classify_spaces(image, layout, 0.5);
  EXPECT_EQ(occupied, (std::vector<std::uint8_t>{1, 1}));
  image.units = {0, 0, 0, 1};
  EXPECT_EQ(classify_spaces(image, layout, 0.5), (std::vector<std::uint8_t>{0, 1}));
  image.units = {0, 0, 0, 0};
  EXPECT_EQ(classify_spaces(image, layout, 0.5), (std::vector<std::uint8_t>{0, 0}));
}

TEST(ClassifySpaces, UnanimityWhenEtaIsOne) {
  const ParkingLayout layout = two_space_layout();
  OccupancyImage image;
  image.units = {1, 0, 1, 1};
  EXPECT_EQ(classify_spaces(image, layout, 1.0), (std::vector<std::uint8_t>{0, 1}));
}

TEST(ClassifySpaces, Validation) {
  const ParkingLayout layout = two_space_layout();
  OccupancyImage wrong;
  wrong.units = {1, 0, 1};
  EXPECT_THROW(classify_spaces(wrong, layout, 0.5), std::invalid_argument);
  OccupancyImage ok;
  ok.units = {0, 0, 0, 0};
  EXPECT_THROW(classify_spaces(ok, layout, 0.0), std::invalid_argument);
  EXPECT_THROW(classify_spaces(ok, layout, 1.5), std::invalid_argument);
}

std::vector<std::uint8_t> bits(std::initializer_list<int> values) {
  std::vector<std::uint8_t> out;
  for (int v : values) out.push_back(static_cast<std::uint8_t>(v));
  return out;
}

TEST(ComputeMetrics, TenVehiclesNineHitsOneFalseAlarm) {
  // 12 spaces: 10 occupied, 9 of them detected, plus 1 false alarm.
  std::vector<std::uint8_t> truth(12, 1);
  truth[10] = 0;
  truth[11] = 0;
  std::vector<std::uint8_t> predicted(12, 1);
  predicted[9] = 0;   // missed vehicle
  predicted[11] = 0;  // true negative; space 10 stays a false alarm
  const RVector delta = RVector::Zero(4);
  const MetricsReport report = compute_metrics(truth, predicted, delta, CVector::Zero(4));
  EXPECT_EQ(report.vehicles, 10);
  EXPECT_EQ(report.hits, 9);
  EXPECT_EQ(report.false_alarms, 1);
  EXPECT_DOUBLE_EQ(report.detection_rate, 0.9);
  EXPECT_DOUBLE_EQ(report.far, 0.1);
  EXPECT_FALSE(report.nmse_db.has_value());  // no true change to normalize by
}

TEST(ComputeMetrics, NmseArithmetic) {
  const auto truth = bits({1, 0});
  const auto predicted = bits({1, 0});
  RVector delta(4);
  delta << 1.0, 0.0, 0.0, 0.0;
  CVector estimate(4);
  estimate << Complex(0.9, 0.0), Complex(0, 0), Complex(0, 0), Complex(0, 0);
  const MetricsReport report = compute_metrics(truth, predicted, delta, estimate);
  ASSERT_TRUE(report.nmse_ratio.has_value());
  EXPECT_NEAR(*report.nmse_ratio, 0.01, 1e-15);
  EXPECT_NEAR(*report.nmse_db, -20.0, 1e-9);
}

TEST(ComputeMetrics, PerfectEstimateHitsFloor) {
  const auto truth = bits({1});
  RVector delta(3);
  delta << 0.4, 0.0, 0.35;
  const MetricsReport report =
      compute_metrics(truth, truth, delta, delta.cast<Complex>().eval());
  ASSERT_TRUE(report.nmse_db.has_value());
  EXPECT_DOUBLE_EQ(*report.nmse_db, -300.0);
  EXPECT_DOUBLE_EQ(*report.nmse_ratio, 0.0);
}

TEST(ComputeMetrics, TinyErrorStillFloorsAtMinus300) {
  EXPECT_DOUBLE_EQ(rissim::nmse_ratio_to_db(1e-40), -300.0);
  EXPECT_DOUBLE_EQ(rissim::nmse_ratio_to_db(1e-20), -200.0);
  EXPECT_DOUBLE_EQ(rissim::nmse_ratio_to_db(1.0), 0.0);
}

TEST(ComputeMetrics, EmptyLotConventions) {
  const auto truth = bits({0, 0, 0});
  const RVector delta = RVector::Zero(2);
  const CVector zero_hat = CVector::Zero(2);
  const MetricsReport clean = compute_metrics(truth, bits({0, 0, 0}), delta, zero_hat);
  EXPECT_DOUBLE_EQ(clean.detection_rate, 1.0);
  EXPECT_DOUBLE_EQ(clean.far, 0.0);
  EXPECT_FALSE(clean.nmse_db.has_value());
  const MetricsReport noisy = compute_metrics(truth, bits({0, 1, 1}), delta, zero_hat);
  EXPECT_DOUBLE_EQ(noisy.detection_rate, 0.0);
  EXPECT_DOUBLE_EQ(noisy.far, 2.0);  // raw count when no vehicles exist
}

TEST(ComputeMetrics, Validation) {
  const RVector delta = RVector::Zero(2);
  EXPECT_THROW(compute_metrics(bits({1, 0}), bits({1}), delta, CVector::Zero(2)),
               std::invalid_argument);
  EXPECT_THROW(compute_metrics(bits({1}), bits({1}), delta, CVector::Zero(3)),
               std::invalid_argument);
}

TEST(AggregateMetrics, AveragesRatesAndRatios) {
  MetricsReport a;
  a.detection_rate = 1.0;
  a.far = 0.0;
  a.nmse_ratio = 0.01;
  a.nmse_db = -20.0;
  MetricsReport b;
  b.detection_rate = 0.5;
  b.far = 0.2;  // no nmse on this trial
  MetricsReport c;
  c.detection_rate = 0.75;
  c.far = 0.1;
  c.nmse_ratio = 0.03;
  c.nmse_db = rissim::nmse_ratio_to_db(0.03);
  const std::vector<MetricsReport> reports{a, b, c};
  const AggregateMetrics agg = rissim::aggregate_metrics(reports);
  EXPECT_EQ(agg.trials, 3);
  EXPECT_DOUBLE_EQ(agg.detection_rate, 0.75);
  EXPECT_NEAR(agg.far, 0.1, 1e-15);
  ASSERT_TRUE(agg.nmse_db.has_value());
  EXPECT_NEAR(*agg.nmse_db, 10.0 * std::log10(0.02), 1e-12);
}

TEST(AggregateMetrics, EdgeCases) {
  EXPECT_EQ(rissim::aggregate_metrics({}).trials, 0);
  EXPECT_FALSE(rissim::aggregate_metrics({}).nmse_db.has_value());
  MetricsReport perfect;
  perfect.detection_rate = 1.0;
  perfect.nmse_ratio = 0.0;
  perfect.nmse_db = -300.0;
  const std::vector<MetricsReport> reports{perfect, perfect};
  const AggregateMetrics agg = rissim::aggregate_metrics(reports);
  ASSERT_TRUE(agg.nmse_db.has_value());
  EXPECT_DOUBLE_EQ(*agg.nmse_db, -300.0);
}

}  // namespace
