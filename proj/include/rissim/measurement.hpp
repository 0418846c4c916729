#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rissim/channel.hpp"
#include "rissim/geometry.hpp"
#include "rissim/rng.hpp"

namespace rissim {

// Draw order: panels outer, symbols next, elements innermost, one uniform
// [0, 2pi) value each.  Freezing the order is what makes schedules portable.
inline PhaseSchedule generate_phase_schedule(int symbols,
                                             const std::vector<int>& ris_element_counts,
                                             std::uint64_t seed) {
  if (symbols < 1)
    throw std::invalid_argument("generate_phase_schedule: symbols must be >= 1");
  if (ris_element_counts.empty())
    throw std::invalid_argument("generate_phase_schedule: no panels");
  Rng g = make_rng(seed);
  PhaseSchedule schedule;
  schedule.symbols = symbols;
  schedule.seed = seed;
  for (int count : ris_element_counts) {
    if (count < 1)
      throw std::invalid_argument("generate_phase_schedule: element count must be >= 1");
    RMatrix omega(count, symbols);
    for (int k = 0; k < symbols; ++k)
      for (int m = 0; m < count; ++m)
        omega(m, k) = 2.0 * std::numbers::pi * uniform_unit(g);
    schedule.phases.push_back(std::move(omega));
  }
  return schedule;
}

// Ground truth for one trial: the lot's scattering profile before (sigma0) and
// after (sigma1) the vehicles arrived.
struct ScatteringScene {
  RVector sigma0;
  RVector sigma1;
  std::vector<int> occupied_spaces;  // ascending space ids
  std::vector<int> changed_units;    // ascending unit indices
};

// Background coefficients are mild clutter; units under a parked vehicle get a
// distinctly stronger draw.  Draw order: sigma0 unit-by-unit, then the space
// selection (partial Fisher-Yates), then one draw per occupied unit in
// ascending (space, unit) order.
inline ScatteringScene generate_scene(const ParkingLayout& layout, int vehicle_count,
                                      Rng& rng) {
  if (vehicle_count < 0 || vehicle_count > layout.space_count())
    throw std::invalid_argument("generate_scene: vehicle_count " +
                                std::to_string(vehicle_count) + " outside [0, " +
                                std::to_string(layout.space_count()) + "]");
  ScatteringScene scene;
  scene.sigma0.resize(layout.unit_count);
  for (int q = 0; q < layout.unit_count; ++q)
    scene.sigma0[q] = uniform_real(rng, 0.45, 0.55);

  std::vector<int> ids(static_cast<std::size_t>(layout.space_count()));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < vehicle_count; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   uniform_below(rng, static_cast<std::uint64_t>(layout.space_count() - i));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  scene.occupied_spaces.assign(ids.begin(), ids.begin() + vehicle_count);
  std::sort(scene.occupied_spaces.begin(), scene.occupied_spaces.end());

  scene.sigma1 = scene.sigma0;
  for (int id : scene.occupied_spaces) {
    for (int q : layout.spaces[static_cast<std::size_t>(id)].units) {
      scene.sigma1[q] = uniform_real(rng, 0.85, 0.95);
      scene.changed_units.push_back(q);
    }
  }
  std::sort(scene.changed_units.begin(), scene.changed_units.end());
  return scene;
}

// Adds circularly symmetric complex Gaussian noise at the given SNR, where the
// signal power reference is the mean |y_n|^2 of the vector being corrupted.
// snr_db = +inf returns y untouched.
inline CVector add_noise(const CVector& y, double snr_db, Rng& rng) {
  if (y.size() == 0) throw std::invalid_argument("add_noise: empty measurement");
  if (std::isinf(snr_db) && snr_db > 0.0) return y;
  if (!std::isfinite(snr_db)) throw std::invalid_argument("add_noise: snr_db must be finite or +inf");
  const double signal_power = y.squaredNorm() / static_cast<double>(y.size());
  if (!(signal_power > 0.0))
    throw std::invalid_argument("add_noise: zero signal has no SNR reference");
  const double noise_var = signal_power / std::pow(10.0, snr_db / 10.0);
  const double component_sigma = std::sqrt(noise_var / 2.0);
  CVector out(y.size());
  for (Eigen::Index n = 0; n < y.size(); ++n) {
    const auto [re, im] = normal_pair(rng);
    out[n] = y[n] + Complex(component_sigma * re, component_sigma * im);
  }
  return out;
}

namespace detail {

inline CVector project_scene(const SensingMatrix& a, const Eigen::Ref<const RVector>& sigma,
                             const char* who) {
  if (sigma.size() != a.entries.cols())
    throw std::invalid_argument(std::string(who) + ": scene has " +
                                std::to_string(sigma.size()) + " units, matrix expects " +
                                std::to_string(a.entries.cols()));
  return a.entries * sigma.cast<Complex>();
}

}  // namespace detail

// Reference (empty-interval) measurement: `sessions` independent noisy
// acquisitions of the sigma0 state, averaged.  With snr_db = +inf the average
// collapses to the exact noiseless projection.
inline CVector synthesize_reference(const SensingMatrix& a,
                                    const Eigen::Ref<const RVector>& sigma0, int sessions,
                                    double snr_db, Rng& rng) {
  if (sessions < 1)
    throw std::invalid_argument("synthesize_reference: sessions must be >= 1");
  const CVector clean = detail::project_scene(a, sigma0, "synthesize_reference");
  if (std::isinf(snr_db) && snr_db > 0.0) return clean;
  CVector acc = CVector::Zero(clean.size());
  for (int p = 0; p < sessions; ++p) acc += add_noise(clean, snr_db, rng);
  return acc / static_cast<double>(sessions);
}

// Single current-interval measurement of the sigma1 state.
inline CVector synthesize_occupied(const SensingMatrix& a,
                                   const Eigen::Ref<const RVector>& sigma1, double snr_db,
                                   Rng& rng) {
  const CVector clean = detail::project_scene(a, sigma1, "synthesize_occupied");
  if (std::isinf(snr_db) && snr_db > 0.0) return clean;
  return add_noise(clean, snr_db, rng);
}

inline CVector difference(const CVector& current, const CVector& reference) {
  if (current.size() != reference.size())
    throw std::invalid_argument("difference: measurement lengths disagree (" +
                                std::to_string(current.size()) + " vs " +
                                std::to_string(reference.size()) + ")");
  return current - reference;
}

// Everything the recovery stage needs about one acquisition, plus the noise
// settings that produced it.
struct MeasurementSet {
  CVector reference;   // y0
  CVector current;     // y1
  CVector delta;       // y1 - y0
  double snr_db = std::numeric_limits<double>::infinity();
  int sessions = 1;
  std::uint64_t seed = 0;
};

inline MeasurementSet assemble_measurements(CVector reference, CVector current, double snr_db,
                                            int sessions, std::uint64_t seed) {
  MeasurementSet set;
  set.delta = difference(current, reference);
  set.reference = std::move(reference);
  set.current = std::move(current);
  set.snr_db = snr_db;
  set.sessions = sessions;
  set.seed = seed;
  return set;
}

}  // namespace rissim
