#include "rissim/channel.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <vector>

#include "rissim/geometry.hpp"
#include "rissim/measurement.hpp"
#include "rissim/rng.hpp"

namespace {

using rissim::build_grid;
using rissim::build_ris_array;
using rissim::CMatrix;
using rissim::Complex;
using rissim::CVector;
using rissim::PhaseSchedule;
using rissim::PlanarArray;
using rissim::Point3;
using rissim::RadioConfig;
using rissim::Rng;
using rissim::RVector;
using rissim::SceneGeometry;
using rissim::SensingMatrix;

TEST(SphericalWave, FrozenReferenceValue) {
  // d = 10.25 wavelengths: phase lands on -pi/2, amplitude 1/(sqrt(4 pi) d).
  const Complex v = rissim::spherical_wave(1.025, 0.1);
  EXPECT_NEAR(v.real(), 0.0, 1e-13);
  EXPECT_NEAR(v.imag(), -0.2752144309989056, 1e-12);
  EXPECT_NEAR(std::abs(v), 1.0 / (3.5449077018110318 * 1.025), 1e-15);
}

TEST(SphericalWave, AmplitudeFallsOffAsInverseDistance) {
  const double lambda = 0.3;
  EXPECT_NEAR(std::abs(rissim::spherical_wave(2.0, lambda)),
              0.5 * std::abs(rissim::spherical_wave(1.0, lambda)), 1e-15);
  // Full wavelength of extra path leaves the phase unchanged.
  const Complex a = rissim::spherical_wave(1.0, 0.5);
  const Complex b = rissim::spherical_wave(1.5, 0.5);
  EXPECT_NEAR(std::arg(a), std::arg(b), 1e-9);
}

TEST(SphericalWave, RejectsDegeneratePaths) {
  EXPECT_THROW(rissim::spherical_wave(0.0, 0.1), rissim::degenerate_geometry);
  EXPECT_THROW(rissim::spherical_wave(-1.0, 0.1), rissim::degenerate_geometry);
}

TEST(RadioConfig, WavelengthAtThreeGigahertz) {
  const RadioConfig radio;
  EXPECT_NEAR(radio.wavelength(), 0.09993081933333334, 1e-15);
}

TEST(SteeringVector, MatchesElementwiseSphericalWave) {
  const std::vector<Point3> targets{{1, 0, 0}, {0, 2, 0}, {0, 0, 3}, {1, 1, 1}};
  const Point3 src{0.5, -0.25, 2.0};
  const double lambda = 0.0999;
  const CVector v = rissim::steering_vector(src, targets, lambda);
  ASSERT_EQ(v.size(), 4);
  for (int n = 0; n < 4; ++n) {
    const Complex expect =
        rissim::spherical_wave(rissim::distance(src, targets[static_cast<std::size_t>(n)]), lambda);
    EXPECT_EQ(v[n], expect);
  }
}

TEST(SteeringVector, ThrowsWhenSourceTouchesTarget) {
  const std::vector<Point3> targets{{1, 2, 3}};
  EXPECT_THROW(rissim::steering_vector({1, 2, 3}, targets, 0.1), rissim::degenerate_geometry);
}

TEST(PairwiseChannel, ShapeAndEntries) {
  const std::vector<Point3> a{{0, 0, 0}, {1, 0, 0}};
  const std::vector<Point3> b{{0, 0, 5}, {2, 0, 5}, {0, 3, 5}};
  const CMatrix h = rissim::pairwise_channel(a, b, 0.1);
  ASSERT_EQ(h.rows(), 2);
  ASSERT_EQ(h.cols(), 3);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c)
      EXPECT_EQ(h(r, c), rissim::spherical_wave(rissim::distance(a[static_cast<std::size_t>(r)],
                                                                 b[static_cast<std::size_t>(c)]),
                                                0.1));
}

// Random mini deployments: point groups live in disjoint z-planes so all
// cross-group distances stay positive by construction.
struct MiniScene {
  Point3 tx, rx;
  PlanarArray panel;
  std::vector<Point3> units;
  RVector omega;
  RadioConfig radio;
};

MiniScene random_mini_scene(Rng& g) {
  MiniScene s;
  s.tx = {rissim::uniform_real(g, -6, 6), rissim::uniform_real(g, -6, 6),
          rissim::uniform_real(g, 0.5, 1.5)};
  s.rx = {rissim::uniform_real(g, -6, 6), rissim::uniform_real(g, -6, 6),
          rissim::uniform_real(g, 0.5, 1.5)};
  const int rows = 1 + static_cast<int>(rissim::uniform_below(g, 3));
  const int cols = 1 + static_cast<int>(rissim::uniform_below(g, 3));
  s.panel = build_ris_array({rissim::uniform_real(g, -3, 3), rissim::uniform_real(g, -3, 3),
                             rissim::uniform_real(g, 2, 4)},
                            rows, cols, 0.3);
  const int q = 1 + static_cast<int>(rissim::uniform_below(g, 5));
  for (int i = 0; i < q; ++i)
    s.units.push_back({rissim::uniform_real(g, -5, 5), rissim::uniform_real(g, -5, 5), 0.0});
  s.omega.resize(s.panel.element_count());
  for (int m = 0; m < s.panel.element_count(); ++m)
    s.omega[m] = 2.0 * std::numbers::pi * rissim::uniform_unit(g);
  s.radio.frequency_hz = rissim::uniform_real(g, 1e9, 6e9);
  s.radio.gain = Complex(rissim::uniform_real(g, 0.5, 1.5), rissim::uniform_real(g, -0.5, 0.5));
  return s;
}

TEST(SensingRow, AgreesWithBruteForceOnRandomMiniScenes) {
  Rng g = rissim::make_rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const MiniScene s = random_mini_scene(g);
    const CVector fast = rissim::sensing_row(s.tx, s.rx, s.panel, s.units, s.omega, s.radio);
    const CVector slow =
        rissim::sensing_row_bruteforce(s.tx, s.rx, s.panel, s.units, s.omega, s.radio);
    ASSERT_EQ(fast.size(), slow.size());
    const double rel = (fast - slow).norm() / slow.norm();
    EXPECT_LE(rel, 1e-10) << "scene " << trial;
  }
}

TEST(SensingRow, RejectsPhaseLengthMismatch) {
  const MiniScene s = [] {
    Rng g = rissim::make_rng(9);
    return random_mini_scene(g);
  }();
  RVector wrong(s.panel.element_count() + 1);
  wrong.setZero();
  EXPECT_THROW(rissim::sensing_row(s.tx, s.rx, s.panel, s.units, wrong, s.radio),
               std::invalid_argument);
}

SceneGeometry two_panel_scene() {
  SceneGeometry scene;
  scene.tx_antennas = {{-4.0, -5.0, 1.0}, {-4.0, 5.0, 1.0}};
  scene.rx_antennas = {{4.0, -5.0, 1.0}, {4.0, 5.0, 1.2}};
  scene.ris = {build_ris_array({2.5, 0.0, 3.0}, 3, 4, 0.1),
               build_ris_array({-2.5, 0.0, 3.0}, 2, 5, 0.1)};
  scene.roi_centers = build_grid(3, 2, 1.5, {0, 0, 0}).unit_centers();
  return scene;
}

PhaseSchedule schedule_for(const SceneGeometry& scene, int symbols, std::uint64_t seed) {
  std::vector<int> counts;
  for (const PlanarArray& p : scene.ris) counts.push_back(p.element_count());
  return rissim::generate_phase_schedule(symbols, counts, seed);
}

TEST(BuildSensingMatrix, RowsMatchSensingRowInDeclaredOrder) {
  const SceneGeometry scene = two_panel_scene();
  const PhaseSchedule schedule = schedule_for(scene, 4, 77);
  const RadioConfig radio{2.8e9, Complex(0.9, 0.2)};
  const SensingMatrix a = rissim::build_sensing_matrix(scene, schedule, radio);
  ASSERT_EQ(a.row_count(), 2 * 4 * 2 * 2);
  ASSERT_EQ(a.entries.cols(), 6);
  for (int i = 0; i < a.n_tx; ++i) {
    for (int k = 0; k < a.symbols; ++k) {
      for (int t = 0; t < a.n_ris; ++t) {
        for (int j = 0; j < a.n_rx; ++j) {
          const CVector row = rissim::sensing_row(
              scene.tx_antennas[static_cast<std::size_t>(i)],
              scene.rx_antennas[static_cast<std::size_t>(j)],
              scene.ris[static_cast<std::size_t>(t)], scene.roi_centers,
              schedule.phases[static_cast<std::size_t>(t)].col(k), radio);
          const double diff =
              (a.entries.row(a.row_index(i, k, t, j)).transpose() - row).norm();
          ASSERT_LE(diff, 1e-14 * row.norm()) << "i=" << i << " k=" << k << " t=" << t
                                              << " j=" << j;
        }
      }
    }
  }
}

TEST(BuildSensingMatrix, RowIndexIsABijection) {
  const SceneGeometry scene = two_panel_scene();
  const PhaseSchedule schedule = schedule_for(scene, 3, 5);
  const SensingMatrix a = rissim::build_sensing_matrix(scene, schedule, RadioConfig{});
  std::set<int> seen;
  for (int i = 0; i < a.n_tx; ++i)
    for (int k = 0; k < a.symbols; ++k)
      for (int t = 0; t < a.n_ris; ++t)
        for (int j = 0; j < a.n_rx; ++j) {
          const int r = a.row_index(i, k, t, j);
          EXPECT_GE(r, 0);
          EXPECT_LT(r, a.row_count());
          EXPECT_TRUE(seen.insert(r).second);
        }
  EXPECT_EQ(static_cast<Eigen::Index>(seen.size()), a.row_count());
  // Symbol index is the fastest-varying dimension.
  EXPECT_EQ(a.row_index(0, 1, 0, 0), a.row_index(0, 0, 0, 0) + 1);
}

TEST(BuildSensingMatrix, ValidatesScheduleShape) {
  const SceneGeometry scene = two_panel_scene();
  PhaseSchedule schedule = schedule_for(scene, 4, 77);
  schedule.phases.pop_back();
  EXPECT_THROW(rissim::build_sensing_matrix(scene, schedule, RadioConfig{}),
               std::invalid_argument);
  PhaseSchedule bad_shape = schedule_for(scene, 4, 77);
  bad_shape.phases[0].conservativeResize(bad_shape.phases[0].rows() + 1, Eigen::NoChange);
  EXPECT_THROW(rissim::build_sensing_matrix(scene, bad_shape, RadioConfig{}),
               std::invalid_argument);
  SceneGeometry empty = scene;
  empty.roi_centers.clear();
  EXPECT_THROW(rissim::build_sensing_matrix(empty, schedule_for(scene, 4, 77), RadioConfig{}),
               std::invalid_argument);
}

TEST(MatrixCache, RoundTripPreservesEveryBit) {
  Rng g = rissim::make_rng(31);
  SensingMatrix a;
  a.entries.resize(7, 5);
  for (Eigen::Index r = 0; r < 7; ++r)
    for (Eigen::Index c = 0; c < 5; ++c) a.entries(r, c) = rissim::complex_normal(g);
  a.symbols = 7;
  a.units = 5;
  const std::string path =
      (std::filesystem::temp_directory_path() / "rissim_cache_roundtrip.rism").string();
  rissim::save_matrix_cache(a, path);
  const SensingMatrix b = rissim::load_matrix_cache(path);
  ASSERT_EQ(b.entries.rows(), 7);
  ASSERT_EQ(b.entries.cols(), 5);
  for (Eigen::Index r = 0; r < 7; ++r)
    for (Eigen::Index c = 0; c < 5; ++c) EXPECT_EQ(a.entries(r, c), b.entries(r, c));
  std::filesystem::remove(path);
}

TEST(MatrixCache, RejectsForeignAndTruncatedFiles) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string garbage = (dir / "rissim_cache_garbage.rism").string();
  {
    std::ofstream out(garbage, std::ios::binary);
    out << "not a cache at all";
  }
  EXPECT_THROW(rissim::load_matrix_cache(garbage), std::runtime_error);
  std::filesystem::remove(garbage);

  SensingMatrix a;
  a.entries = CMatrix::Constant(3, 3, Complex(1.0, -1.0));
  const std::string truncated = (dir / "rissim_cache_truncated.rism").string();
  rissim::save_matrix_cache(a, truncated);
  std::filesystem::resize_file(truncated, std::filesystem::file_size(truncated) - 9);
  EXPECT_THROW(rissim::load_matrix_cache(truncated), std::runtime_error);
  std::filesystem::remove(truncated);

  EXPECT_THROW(rissim::load_matrix_cache((dir / "rissim_no_such_file.rism").string()),
               std::runtime_error);
}

}  // namespace
