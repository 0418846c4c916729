#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rissim/geometry.hpp"

namespace rissim {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double kSpeedOfLight = 299792458.0;

// Thrown when propagation geometry collapses (coincident endpoints -> zero
// path length -> singular spherical spreading).
struct degenerate_geometry : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Carrier settings.  `gain` is the combined complex transceiver gain; antenna
// patterns are not modeled beyond it.
struct RadioConfig {
  double frequency_hz = 3.0e9;
  Complex gain{1.0, 0.0};

  double wavelength() const { return kSpeedOfLight / frequency_hz; }
};

// Free-space spherical wave over a path of length d:
// exp(-j 2 pi d / lambda) / (sqrt(4 pi) d).
inline Complex spherical_wave(double d, double wavelength) {
  if (!(d > 0.0))
    throw degenerate_geometry("spherical_wave: path length must be > 0");
  const double amplitude = 1.0 / (std::sqrt(4.0 * std::numbers::pi) * d);
  return std::polar(amplitude, -2.0 * std::numbers::pi * d / wavelength);
}

// Response seen from `src` at each target point.
inline CVector steering_vector(const Point3& src, std::span<const Point3> targets,
                               double wavelength) {
  CVector v(static_cast<Eigen::Index>(targets.size()));
  for (std::size_t n = 0; n < targets.size(); ++n)
    v[static_cast<Eigen::Index>(n)] = spherical_wave(distance(src, targets[n]), wavelength);
  return v;
}

// Matrix of spherical-wave responses between two point sets, entry (a, b) for
// the path points_a[a] -> points_b[b].
inline CMatrix pairwise_channel(std::span<const Point3> points_a,
                                std::span<const Point3> points_b, double wavelength) {
  CMatrix h(static_cast<Eigen::Index>(points_a.size()),
            static_cast<Eigen::Index>(points_b.size()));
  for (std::size_t a = 0; a < points_a.size(); ++a)
    for (std::size_t b = 0; b < points_b.size(); ++b)
      h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          spherical_wave(distance(points_a[a], points_b[b]), wavelength);
  return h;
}

// Phase pattern applied by the reflecting panels during one acquisition:
// for each panel t a M_t x K matrix whose column k holds the element phases of
// symbol k, each in [0, 2pi).  Reproducible from `seed`.
struct PhaseSchedule {
  int symbols = 0;                   // K
  std::vector<RMatrix> phases;       // per panel: element_count x symbols
  std::uint64_t seed = 0;

  int ris_count() const { return static_cast<int>(phases.size()); }
};

namespace detail {

// Core cascaded product shared by sensing_row and build_sensing_matrix:
// row^T = g * (diag(h_tx) H) (exp(-j omega) .* h_rx), evaluated per ROI unit.
// `b` is diag(h_tx) H (units x elements), precomputed by the caller so it can
// be reused across symbols.
inline CVector cascaded_row(const CMatrix& b, const CVector& h_rx,
                            const Eigen::Ref<const RVector>& omega, Complex gain) {
  CVector w(h_rx.size());
  for (Eigen::Index m = 0; m < h_rx.size(); ++m)
    w[m] = std::polar(1.0, -omega[m]) * h_rx[m];
  return gain * (b * w);
}

}  // namespace detail

// One row of the sensing matrix: the per-unit cascaded response
// tx -> unit -> panel (with phases `omega`) -> rx, without the unit's
// scattering coefficient.
inline CVector sensing_row(const Point3& tx, const Point3& rx, const PlanarArray& ris,
                           std::span<const Point3> roi_centers,
                           const Eigen::Ref<const RVector>& omega,
                           const RadioConfig& radio) {
  if (omega.size() != ris.element_count())
    throw std::invalid_argument("sensing_row: phase vector length " +
                                std::to_string(omega.size()) + " != element count " +
                                std::to_string(ris.element_count()));
  const double lambda = radio.wavelength();
  const std::vector<Point3> elements = ris.element_centers();
  const CVector h_tx = steering_vector(tx, roi_centers, lambda);
  const CMatrix b = h_tx.asDiagonal() * pairwise_channel(roi_centers, elements, lambda);
  const CVector h_rx = steering_vector(rx, elements, lambda);
  return detail::cascaded_row(b, h_rx, omega, radio.gain);
}

// Scalar re-derivation of sensing_row, kept free of every vectorized helper
// above so the two code paths can check each other.
inline CVector sensing_row_bruteforce(const Point3& tx, const Point3& rx,
                                      const PlanarArray& ris,
                                      std::span<const Point3> roi_centers,
                                      const Eigen::Ref<const RVector>& omega,
                                      const RadioConfig& radio) {
  if (omega.size() != ris.element_count())
    throw std::invalid_argument("sensing_row_bruteforce: phase/element count mismatch");
  const double lambda = radio.wavelength();
  const double root_4pi = std::sqrt(4.0 * std::numbers::pi);
  const double two_pi = 2.0 * std::numbers::pi;
  CVector out(static_cast<Eigen::Index>(roi_centers.size()));
  for (std::size_t q = 0; q < roi_centers.size(); ++q) {
    const Point3& u = roi_centers[q];
    const double d_tx = std::sqrt((tx.x - u.x) * (tx.x - u.x) + (tx.y - u.y) * (tx.y - u.y) +
                                  (tx.z - u.z) * (tx.z - u.z));
    if (!(d_tx > 0.0)) throw degenerate_geometry("sensing_row_bruteforce: tx on ROI unit");
    const Complex a_tx =
        std::exp(Complex(0.0, -two_pi * d_tx / lambda)) / (root_4pi * d_tx);
    Complex acc(0.0, 0.0);
    for (int m = 0; m < ris.element_count(); ++m) {
      const Point3 e = ris.element_center(m);
      const double d_ue = std::sqrt((u.x - e.x) * (u.x - e.x) + (u.y - e.y) * (u.y - e.y) +
                                    (u.z - e.z) * (u.z - e.z));
      const double d_er = std::sqrt((e.x - rx.x) * (e.x - rx.x) + (e.y - rx.y) * (e.y - rx.y) +
                                    (e.z - rx.z) * (e.z - rx.z));
      if (!(d_ue > 0.0) || !(d_er > 0.0))
        throw degenerate_geometry("sensing_row_bruteforce: coincident element path");
      const Complex a_ue =
          std::exp(Complex(0.0, -two_pi * d_ue / lambda)) / (root_4pi * d_ue);
      const Complex a_er =
          std::exp(Complex(0.0, -two_pi * d_er / lambda)) / (root_4pi * d_er);
      acc += a_tx * a_ue * std::exp(Complex(0.0, -omega[m])) * a_er;
    }
    out[static_cast<Eigen::Index>(q)] = radio.gain * acc;
  }
  return out;
}

// Everything fixed about the deployment: transceiver antennas, reflecting
// panels, and the ROI unit centers the system images.
struct SceneGeometry {
  std::vector<Point3> tx_antennas;
  std::vector<Point3> rx_antennas;
  std::vector<PlanarArray> ris;
  std::vector<Point3> roi_centers;
};

// Stacked linear model mapping per-unit scattering coefficients to the full
// measurement vector.  Rows are grouped by (tx antenna i, panel t, rx antenna
// j) with the symbol index k running fastest inside each group.
struct SensingMatrix {
  CMatrix entries;  // row_count x units
  int n_tx = 1;
  int symbols = 0;  // K
  int n_ris = 1;    // T
  int n_rx = 1;
  int units = 0;    // Q

  Eigen::Index row_count() const { return entries.rows(); }

  int row_index(int i, int k, int t, int j) const {
    return ((i * n_ris + t) * n_rx + j) * symbols + k;
  }
};

inline SensingMatrix build_sensing_matrix(const SceneGeometry& scene,
                                          const PhaseSchedule& schedule,
                                          const RadioConfig& radio) {
  if (scene.tx_antennas.empty() || scene.rx_antennas.empty())
    throw std::invalid_argument("build_sensing_matrix: need at least one tx and rx antenna");
  if (scene.ris.empty())
    throw std::invalid_argument("build_sensing_matrix: need at least one panel");
  if (scene.roi_centers.empty())
    throw std::invalid_argument("build_sensing_matrix: empty ROI");
  if (schedule.symbols < 1)
    throw std::invalid_argument("build_sensing_matrix: schedule has no symbols");
  if (schedule.ris_count() != static_cast<int>(scene.ris.size()))
    throw std::invalid_argument("build_sensing_matrix: schedule covers " +
                                std::to_string(schedule.ris_count()) + " panels, scene has " +
                                std::to_string(scene.ris.size()));
  for (std::size_t t = 0; t < scene.ris.size(); ++t) {
    if (schedule.phases[t].rows() != scene.ris[t].element_count() ||
        schedule.phases[t].cols() != schedule.symbols)
      throw std::invalid_argument("build_sensing_matrix: phase matrix shape mismatch for panel " +
                                  std::to_string(t));
  }

  SensingMatrix a;
  a.n_tx = static_cast<int>(scene.tx_antennas.size());
  a.symbols = schedule.symbols;
  a.n_ris = static_cast<int>(scene.ris.size());
  a.n_rx = static_cast<int>(scene.rx_antennas.size());
  a.units = static_cast<int>(scene.roi_centers.size());
  a.entries.resize(static_cast<Eigen::Index>(a.n_tx) * a.symbols * a.n_ris * a.n_rx, a.units);

  const double lambda = radio.wavelength();
  for (int i = 0; i < a.n_tx; ++i) {
    const CVector h_tx = steering_vector(scene.tx_antennas[static_cast<std::size_t>(i)],
                                         scene.roi_centers, lambda);
    for (int t = 0; t < a.n_ris; ++t) {
      const std::vector<Point3> elements = scene.ris[static_cast<std::size_t>(t)].element_centers();
      const CMatrix b = h_tx.asDiagonal() * pairwise_channel(scene.roi_centers, elements, lambda);
      for (int j = 0; j < a.n_rx; ++j) {
        const CVector h_rx =
            steering_vector(scene.rx_antennas[static_cast<std::size_t>(j)], elements, lambda);
        for (int k = 0; k < a.symbols; ++k) {
          a.entries.row(a.row_index(i, k, t, j)) =
              detail::cascaded_row(b, h_rx, schedule.phases[static_cast<std::size_t>(t)].col(k),
                                   radio.gain)
                  .transpose();
        }
      }
    }
  }
  return a;
}

// --- binary matrix cache ----------------------------------------------------
//
// Layout: magic "RISM", u32 version (= 1), u64 rows, u64 cols, then row-major
// (re, im) float64 pairs.  Values are written little-endian; big-endian hosts
// are rejected at compile time rather than byte-swapped.

static_assert(std::endian::native == std::endian::little,
              "matrix cache i/o assumes a little-endian host");

inline constexpr char kMatrixCacheMagic[4] = {'R', 'I', 'S', 'M'};
inline constexpr std::uint32_t kMatrixCacheVersion = 1;

inline void save_matrix_cache(const SensingMatrix& a, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_matrix_cache: cannot open " + path);
  out.write(kMatrixCacheMagic, 4);
  const std::uint32_t version = kMatrixCacheVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t rows = static_cast<std::uint64_t>(a.entries.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(a.entries.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  for (Eigen::Index r = 0; r < a.entries.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.entries.cols(); ++c) {
      const double re = a.entries(r, c).real();
      const double im = a.entries(r, c).imag();
      out.write(reinterpret_cast<const char*>(&re), sizeof re);
      out.write(reinterpret_cast<const char*>(&im), sizeof im);
    }
  }
  if (!out) throw std::runtime_error("save_matrix_cache: write failed for " + path);
}

// Restores only the numeric matrix; the structural split of the row count into
// (tx, symbols, panels, rx) is the caller's to reapply from its own config.
inline SensingMatrix load_matrix_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_matrix_cache: cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMatrixCacheMagic, 4) != 0)
    throw std::runtime_error("load_matrix_cache: " + path + " is not a matrix cache");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kMatrixCacheVersion)
    throw std::runtime_error("load_matrix_cache: " + path + " has unsupported version " +
                             std::to_string(version));
  std::uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || rows == 0 || cols == 0)
    throw std::runtime_error("load_matrix_cache: " + path + " has bad dimensions");

  SensingMatrix a;
  a.entries.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  a.n_tx = 1;
  a.symbols = static_cast<int>(rows);
  a.n_ris = 1;
  a.n_rx = 1;
  a.units = static_cast<int>(cols);
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (std::uint64_t c = 0; c < cols; ++c) {
      double re = 0.0, im = 0.0;
      in.read(reinterpret_cast<char*>(&re), sizeof re);
      in.read(reinterpret_cast<char*>(&im), sizeof im);
      a.entries(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = Complex(re, im);
    }
  }
  if (!in) throw std::runtime_error("load_matrix_cache: " + path + " truncated");
  return a;
}

}  // namespace rissim
