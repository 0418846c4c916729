#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rissim/channel.hpp"
#include "rissim/geometry.hpp"

namespace rissim {

// Decision thresholds: a unit counts as "under a vehicle" when the real part
// of its recovered change lands strictly inside (tau1, tau2); a space counts
// as occupied when at least the fraction `eta` of its units do.
struct DetectionConfig {
  double tau1 = 0.25;
  double tau2 = 0.55;
  double eta = 0.5;
};

struct OccupancyImage {
  std::vector<std::uint8_t> units;  // 1 = flagged as covered by a vehicle
};

inline OccupancyImage classify_units(const CVector& delta_sigma_hat,
                                     const DetectionConfig& cfg) {
  if (!(cfg.tau1 < cfg.tau2))
    throw std::invalid_argument("classify_units: tau1 must be < tau2");
  OccupancyImage image;
  image.units.resize(static_cast<std::size_t>(delta_sigma_hat.size()));
  for (Eigen::Index q = 0; q < delta_sigma_hat.size(); ++q) {
    const double value = delta_sigma_hat[q].real();
    image.units[static_cast<std::size_t>(q)] =
        (cfg.tau1 < value && value < cfg.tau2) ? 1 : 0;
  }
  return image;
}

inline std::vector<std::uint8_t> classify_spaces(const OccupancyImage& image,
                                                 const ParkingLayout& layout, double eta) {
  if (static_cast<int>(image.units.size()) != layout.unit_count)
    throw std::invalid_argument("classify_spaces: image covers " +
                                std::to_string(image.units.size()) + " units, layout has " +
                                std::to_string(layout.unit_count));
  if (!(eta > 0.0) || eta > 1.0)
    throw std::invalid_argument("classify_spaces: eta must be in (0, 1]");
  std::vector<std::uint8_t> occupied(layout.spaces.size(), 0);
  for (const ParkingSpace& space : layout.spaces) {
    int flagged = 0;
    for (int q : space.units) flagged += image.units[static_cast<std::size_t>(q)];
    const double fraction = static_cast<double>(flagged) / static_cast<double>(space.units.size());
    occupied[static_cast<std::size_t>(space.id)] = fraction >= eta ? 1 : 0;
  }
  return occupied;
}

// Per-trial outcome.  Rates follow the vehicle-normalized convention: both the
// hit count and the false-alarm count are divided by the number of vehicles
// actually present.
struct MetricsReport {
  double detection_rate = 0.0;
  double far = 0.0;
  std::optional<double> nmse_db;     // floored at -300; absent when no change occurred
  std::optional<double> nmse_ratio;  // raw ||estimate - truth||^2 / ||truth||^2
  int vehicles = 0;                  // ground-truth occupied spaces
  int hits = 0;                      // occupied spaces correctly flagged
  int false_alarms = 0;              // empty spaces flagged
};

inline constexpr double kNmseFloorDb = -300.0;

inline double nmse_ratio_to_db(double ratio) {
  if (!(ratio > 0.0)) return kNmseFloorDb;
  return std::max(10.0 * std::log10(ratio), kNmseFloorDb);
}

inline MetricsReport compute_metrics(std::span<const std::uint8_t> truth,
                                     std::span<const std::uint8_t> predicted,
                                     const Eigen::Ref<const RVector>& delta_sigma,
                                     const CVector& delta_sigma_hat) {
  if (truth.size() != predicted.size())
    throw std::invalid_argument("compute_metrics: truth/prediction lengths disagree");
  if (delta_sigma.size() != delta_sigma_hat.size())
    throw std::invalid_argument("compute_metrics: image lengths disagree");

  MetricsReport report;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    report.vehicles += truth[s] ? 1 : 0;
    if (predicted[s] && truth[s]) ++report.hits;
    if (predicted[s] && !truth[s]) ++report.false_alarms;
  }
  if (report.vehicles > 0) {
    report.detection_rate = static_cast<double>(report.hits) / report.vehicles;
    report.far = static_cast<double>(report.false_alarms) / report.vehicles;
  } else {
    // Empty lot: perfect iff nothing was flagged.  The false-alarm count keeps
    // its raw value (denominator clamped to 1) so spurious detections still
    // show up in aggregates.
    report.detection_rate = report.false_alarms == 0 ? 1.0 : 0.0;
    report.far = static_cast<double>(report.false_alarms);
  }

  const double truth_energy = delta_sigma.squaredNorm();
  if (truth_energy > 0.0) {
    const double error_energy = (delta_sigma_hat - delta_sigma.cast<Complex>()).squaredNorm();
    report.nmse_ratio = error_energy / truth_energy;
    report.nmse_db = nmse_ratio_to_db(*report.nmse_ratio);
  }
  return report;
}

struct AggregateMetrics {
  double detection_rate = 0.0;
  double far = 0.0;
  std::optional<double> nmse_db;  // 10 log10 of the mean error ratio
  int trials = 0;
};

inline AggregateMetrics aggregate_metrics(std::span<const MetricsReport> reports) {
  AggregateMetrics agg;
  agg.trials = static_cast<int>(reports.size());
  if (reports.empty()) return agg;
  double ratio_sum = 0.0;
  int ratio_count = 0;
  for (const MetricsReport& r : reports) {
    agg.detection_rate += r.detection_rate;
    agg.far += r.far;
    if (r.nmse_ratio) {
      ratio_sum += *r.nmse_ratio;
      ++ratio_count;
    }
  }
  agg.detection_rate /= agg.trials;
  agg.far /= agg.trials;
  if (ratio_count > 0) agg.nmse_db = nmse_ratio_to_db(ratio_sum / ratio_count);
  return agg;
}

}  // namespace rissim
