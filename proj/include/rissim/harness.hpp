#pragma once

#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rissim/channel.hpp"
#include "rissim/detection.hpp"
#include "rissim/geometry.hpp"
#include "rissim/measurement.hpp"
#include "rissim/recovery.hpp"
#include "rissim/rng.hpp"

namespace rissim {

inline constexpr const char* kToolName = "ris-sim";
inline constexpr const char* kToolVersion = "0.1.0";

// How the empty-lot reference measurement is obtained.
enum class ReferenceMode {
  averaged,  // mean of `reference_sessions` independent noisy acquisitions
  ideal,     // exact noiseless projection of the background profile
  previous,  // one noisy acquisition from the preceding interval
};

// How the pursuit's sparsity budget is chosen per trial.
enum class SparsityMode {
  fixed,   // constant budget, independent of the true occupancy
  oracle,  // units_per_space * vehicle_count (ground-truth cardinality)
};

struct ExperimentConfig {
  // geometry
  int grid_nx = 10;
  int grid_ny = 11;
  double cell_size = 2.5;
  Point3 roi_center{0.0, 0.0, 0.0};
  std::vector<int> lane_rows{2, 5, 8};
  std::vector<Point3> tx_antennas{{-12.5, -13.75, 1.0}};
  std::vector<Point3> rx_antennas{{-12.5, -13.75, 1.0}};
  int ris_rows = 50;
  int ris_cols = 50;
  double ris_pitch = 0.05;
  std::map<int, std::vector<Point3>> ris_placements{
      {1, {{0.0, 0.0, 3.0}}},
      {2, {{7.5, 0.0, 3.0}, {-7.5, 0.0, 3.0}}},
      {4, {{7.5, 7.5, 3.0}, {-7.5, 7.5, 3.0}, {-7.5, -7.5, 3.0}, {7.5, -7.5, 3.0}}},
  };

  // radio
  double frequency_hz = 3.0e9;
  Complex gain{1.0, 0.0};

  // acquisition
  int symbols = 300;            // phase patterns per panel
  int reference_sessions = 100;
  ReferenceMode reference_mode = ReferenceMode::averaged;

  // sweep
  std::vector<double> snr_db{30.0};
  std::vector<int> ris_counts{2};
  std::vector<int> vehicle_counts = [] {
    std::vector<int> v(40);
    for (int i = 0; i < 40; ++i) v[static_cast<std::size_t>(i)] = i + 1;
    return v;
  }();
  int trials = 1000;

  // recovery
  SparsityMode sparsity_mode = SparsityMode::fixed;
  int fixed_sparsity = 56;
  int sp_max_iterations = 50;
  double sp_residual_tolerance = 1e-12;
  bool sp_normalize = true;

  // detection
  DetectionConfig detection;

  std::uint64_t master_seed = 1;
};

// --- seeding ----------------------------------------------------------------

inline constexpr std::uint64_t kStreamPhase = 1;
inline constexpr std::uint64_t kStreamTrial = 2;

inline std::uint64_t phase_seed(const ExperimentConfig& cfg, int ris_count) {
  return derive_seed(cfg.master_seed, {kStreamPhase, static_cast<std::uint64_t>(ris_count)});
}

inline std::uint64_t trial_seed(const ExperimentConfig& cfg, int ris_count, double snr_db,
                                int vehicle_count, std::uint64_t trial_index) {
  return derive_seed(cfg.master_seed,
                     {kStreamTrial, static_cast<std::uint64_t>(ris_count),
                      std::bit_cast<std::uint64_t>(snr_db),
                      static_cast<std::uint64_t>(vehicle_count), trial_index});
}

// --- config json ------------------------------------------------------------

namespace detail {

using nlohmann::json;

inline void warn_unknown(const json& j, std::initializer_list<const char*> known,
                         const std::string& scope) {
  if (!j.is_object()) return;
  for (const auto& item : j.items()) {
    bool found = false;
    for (const char* k : known)
      if (item.key() == k) { found = true; break; }
    if (!found)
      std::cerr << "config: ignoring unknown field '" << scope << item.key() << "'\n";
  }
}

inline Point3 point_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw std::runtime_error("config: " + where + " must be a [x, y, z] array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline std::vector<Point3> points_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw std::runtime_error("config: " + where + " must be an array of points");
  std::vector<Point3> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(point_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline double snr_from_json(const json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string() && (j.get<std::string>() == "inf" || j.get<std::string>() == "+inf"))
    return std::numeric_limits<double>::infinity();
  throw std::runtime_error("config: " + where + " must be a number or \"inf\"");
}

inline json point_to_json(const Point3& p) { return json::array({p.x, p.y, p.z}); }

}  // namespace detail

inline std::string to_string(ReferenceMode mode) {
  switch (mode) {
    case ReferenceMode::averaged: return "averaged";
    case ReferenceMode::ideal: return "ideal";
    case ReferenceMode::previous: return "previous";
  }
  return "averaged";
}

inline std::string to_string(SparsityMode mode) {
  return mode == SparsityMode::fixed ? "fixed" : "oracle";
}

inline ReferenceMode reference_mode_from_string(const std::string& s) {
  if (s == "averaged") return ReferenceMode::averaged;
  if (s == "ideal") return ReferenceMode::ideal;
  if (s == "previous") return ReferenceMode::previous;
  throw std::runtime_error("config: acquisition.reference_mode must be one of "
                           "\"averaged\", \"ideal\", \"previous\" (got \"" + s + "\")");
}

inline SparsityMode sparsity_mode_from_string(const std::string& s) {
  if (s == "fixed") return SparsityMode::fixed;
  if (s == "oracle") return SparsityMode::oracle;
  throw std::runtime_error("config: recovery.sparsity_mode must be \"fixed\" or \"oracle\" "
                           "(got \"" + s + "\")");
}

inline void validate_config(const ExperimentConfig& cfg) {
  const auto fail = [](const std::string& msg) { throw std::runtime_error("config: " + msg); };
  if (cfg.grid_nx < 1 || cfg.grid_ny < 1) fail("geometry.grid.nx and .ny must be >= 1");
  if (!(cfg.cell_size > 0.0)) fail("geometry.grid.cell_size must be > 0");
  if (cfg.tx_antennas.empty()) fail("geometry.tx must list at least one antenna");
  if (cfg.rx_antennas.empty()) fail("geometry.rx must list at least one antenna");
  if (cfg.ris_rows < 1 || cfg.ris_cols < 1) fail("geometry.ris.rows and .cols must be >= 1");
  if (!(cfg.ris_pitch > 0.0)) fail("geometry.ris.pitch must be > 0");
  if (!(cfg.frequency_hz > 0.0)) fail("radio.frequency_hz must be > 0");
  if (!(std::abs(cfg.gain) > 0.0)) fail("radio.gain must be nonzero");
  if (cfg.symbols < 1) fail("acquisition.symbols must be >= 1");
  if (cfg.reference_sessions < 1) fail("acquisition.reference_sessions must be >= 1");
  if (cfg.snr_db.empty()) fail("sweep.snr_db must be non-empty");
  for (double s : cfg.snr_db)
    if (!std::isfinite(s) && !(std::isinf(s) && s > 0.0))
      fail("sweep.snr_db entries must be finite or \"inf\"");
  if (cfg.ris_counts.empty()) fail("sweep.ris_counts must be non-empty");
  for (int t : cfg.ris_counts) {
    if (t < 1) fail("sweep.ris_counts entries must be >= 1");
    const auto it = cfg.ris_placements.find(t);
    if (it == cfg.ris_placements.end())
      fail("geometry.ris.placements has no entry for ris count " + std::to_string(t));
    if (static_cast<int>(it->second.size()) != t)
      fail("geometry.ris.placements[\"" + std::to_string(t) + "\"] must list exactly " +
           std::to_string(t) + " centers");
  }
  if (cfg.vehicle_counts.empty()) fail("sweep.vehicle_counts must be non-empty");
  for (int v : cfg.vehicle_counts)
    if (v < 0) fail("sweep.vehicle_counts entries must be >= 0");
  if (cfg.trials < 1) fail("sweep.trials must be >= 1");
  if (cfg.sparsity_mode == SparsityMode::fixed && cfg.fixed_sparsity < 1)
    fail("recovery.fixed_sparsity must be >= 1");
  if (cfg.sp_max_iterations < 0) fail("recovery.max_iterations must be >= 0");
  if (!(cfg.sp_residual_tolerance >= 0.0)) fail("recovery.residual_tolerance must be >= 0");
  if (!(cfg.detection.tau1 < cfg.detection.tau2)) fail("detection.tau1 must be < detection.tau2");
  if (!(cfg.detection.eta > 0.0) || cfg.detection.eta > 1.0)
    fail("detection.eta must be in (0, 1]");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::json;
  ExperimentConfig cfg;
  if (!j.is_object()) throw std::runtime_error("config: top level must be a JSON object");
  detail::warn_unknown(j, {"geometry", "radio", "acquisition", "sweep", "recovery", "detection",
                           "master_seed"},
                       "");

  if (j.contains("geometry")) {
    const json& g = j.at("geometry");
    detail::warn_unknown(g, {"grid", "lane_rows", "tx", "rx", "ris"}, "geometry.");
    if (g.contains("grid")) {
      const json& grid = g.at("grid");
      detail::warn_unknown(grid, {"nx", "ny", "cell_size", "center"}, "geometry.grid.");
      if (grid.contains("nx")) cfg.grid_nx = grid.at("nx").get<int>();
      if (grid.contains("ny")) cfg.grid_ny = grid.at("ny").get<int>();
      if (grid.contains("cell_size")) cfg.cell_size = grid.at("cell_size").get<double>();
      if (grid.contains("center"))
        cfg.roi_center = detail::point_from_json(grid.at("center"), "geometry.grid.center");
    }
    if (g.contains("lane_rows")) cfg.lane_rows = g.at("lane_rows").get<std::vector<int>>();
    if (g.contains("tx")) cfg.tx_antennas = detail::points_from_json(g.at("tx"), "geometry.tx");
    if (g.contains("rx")) cfg.rx_antennas = detail::points_from_json(g.at("rx"), "geometry.rx");
    if (g.contains("ris")) {
      const json& r = g.at("ris");
      detail::warn_unknown(r, {"rows", "cols", "pitch", "placements"}, "geometry.ris.");
      if (r.contains("rows")) cfg.ris_rows = r.at("rows").get<int>();
      if (r.contains("cols")) cfg.ris_cols = r.at("cols").get<int>();
      if (r.contains("pitch")) cfg.ris_pitch = r.at("pitch").get<double>();
      if (r.contains("placements")) {
        cfg.ris_placements.clear();
        for (const auto& item : r.at("placements").items()) {
          int count = 0;
          try {
            count = std::stoi(item.key());
          } catch (const std::exception&) {
            throw std::runtime_error(
                "config: geometry.ris.placements keys must be integer ris counts (got \"" +
                item.key() + "\")");
          }
          cfg.ris_placements[count] = detail::points_from_json(
              item.value(), "geometry.ris.placements[\"" + item.key() + "\"]");
        }
      }
    }
  }

  if (j.contains("radio")) {
    const json& r = j.at("radio");
    detail::warn_unknown(r, {"frequency_hz", "gain"}, "radio.");
    if (r.contains("frequency_hz")) cfg.frequency_hz = r.at("frequency_hz").get<double>();
    if (r.contains("gain")) {
      const json& g = r.at("gain");
      if (g.is_number()) {
        cfg.gain = Complex(g.get<double>(), 0.0);
      } else if (g.is_array() && g.size() == 2) {
        cfg.gain = Complex(g[0].get<double>(), g[1].get<double>());
      } else {
        throw std::runtime_error("config: radio.gain must be a number or [re, im]");
      }
    }
  }

  if (j.contains("acquisition")) {
    const json& a = j.at("acquisition");
    detail::warn_unknown(a, {"symbols", "reference_sessions", "reference_mode"}, "acquisition.");
    if (a.contains("symbols")) cfg.symbols = a.at("symbols").get<int>();
    if (a.contains("reference_sessions"))
      cfg.reference_sessions = a.at("reference_sessions").get<int>();
    if (a.contains("reference_mode"))
      cfg.reference_mode = reference_mode_from_string(a.at("reference_mode").get<std::string>());
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    detail::warn_unknown(s, {"snr_db", "ris_counts", "vehicle_counts", "trials"}, "sweep.");
    if (s.contains("snr_db")) {
      cfg.snr_db.clear();
      const json& arr = s.at("snr_db");
      if (!arr.is_array()) throw std::runtime_error("config: sweep.snr_db must be an array");
      for (std::size_t i = 0; i < arr.size(); ++i)
        cfg.snr_db.push_back(
            detail::snr_from_json(arr[i], "sweep.snr_db[" + std::to_string(i) + "]"));
    }
    if (s.contains("ris_counts")) cfg.ris_counts = s.at("ris_counts").get<std::vector<int>>();
    if (s.contains("vehicle_counts"))
      cfg.vehicle_counts = s.at("vehicle_counts").get<std::vector<int>>();
    if (s.contains("trials")) cfg.trials = s.at("trials").get<int>();
  }

  if (j.contains("recovery")) {
    const json& r = j.at("recovery");
    detail::warn_unknown(r, {"sparsity_mode", "fixed_sparsity", "max_iterations",
                             "residual_tolerance", "normalize_correlations"},
                         "recovery.");
    if (r.contains("sparsity_mode"))
      cfg.sparsity_mode = sparsity_mode_from_string(r.at("sparsity_mode").get<std::string>());
    if (r.contains("fixed_sparsity")) cfg.fixed_sparsity = r.at("fixed_sparsity").get<int>();
    if (r.contains("max_iterations")) cfg.sp_max_iterations = r.at("max_iterations").get<int>();
    if (r.contains("residual_tolerance"))
      cfg.sp_residual_tolerance = r.at("residual_tolerance").get<double>();
    if (r.contains("normalize_correlations"))
      cfg.sp_normalize = r.at("normalize_correlations").get<bool>();
  }

  if (j.contains("detection")) {
    const json& d = j.at("detection");
    detail::warn_unknown(d, {"tau1", "tau2", "eta"}, "detection.");
    if (d.contains("tau1")) cfg.detection.tau1 = d.at("tau1").get<double>();
    if (d.contains("tau2")) cfg.detection.tau2 = d.at("tau2").get<double>();
    if (d.contains("eta")) cfg.detection.eta = d.at("eta").get<double>();
  }

  if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();

  validate_config(cfg);
  return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  using detail::json;
  json placements = json::object();
  for (const auto& [count, centers] : cfg.ris_placements) {
    json arr = json::array();
    for (const Point3& p : centers) arr.push_back(detail::point_to_json(p));
    placements[std::to_string(count)] = arr;
  }
  json tx = json::array(), rx = json::array();
  for (const Point3& p : cfg.tx_antennas) tx.push_back(detail::point_to_json(p));
  for (const Point3& p : cfg.rx_antennas) rx.push_back(detail::point_to_json(p));
  json snr = json::array();
  for (double s : cfg.snr_db) {
    if (std::isinf(s))
      snr.push_back("inf");
    else
      snr.push_back(s);
  }
  return json{
      {"geometry",
       {{"grid",
         {{"nx", cfg.grid_nx},
          {"ny", cfg.grid_ny},
          {"cell_size", cfg.cell_size},
          {"center", detail::point_to_json(cfg.roi_center)}}},
        {"lane_rows", cfg.lane_rows},
        {"tx", tx},
        {"rx", rx},
        {"ris",
         {{"rows", cfg.ris_rows},
          {"cols", cfg.ris_cols},
          {"pitch", cfg.ris_pitch},
          {"placements", placements}}}}},
      {"radio",
       {{"frequency_hz", cfg.frequency_hz},
        {"gain", json::array({cfg.gain.real(), cfg.gain.imag()})}}},
      {"acquisition",
       {{"symbols", cfg.symbols},
        {"reference_sessions", cfg.reference_sessions},
        {"reference_mode", to_string(cfg.reference_mode)}}},
      {"sweep",
       {{"snr_db", snr},
        {"ris_counts", cfg.ris_counts},
        {"vehicle_counts", cfg.vehicle_counts},
        {"trials", cfg.trials}}},
      {"recovery",
       {{"sparsity_mode", to_string(cfg.sparsity_mode)},
        {"fixed_sparsity", cfg.fixed_sparsity},
        {"max_iterations", cfg.sp_max_iterations},
        {"residual_tolerance", cfg.sp_residual_tolerance},
        {"normalize_correlations", cfg.sp_normalize}}},
      {"detection",
       {{"tau1", cfg.detection.tau1}, {"tau2", cfg.detection.tau2}, {"eta", cfg.detection.eta}}},
      {"master_seed", cfg.master_seed},
  };
}

// Missing or all-whitespace files yield the built-in defaults.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    ExperimentConfig cfg;
    validate_config(cfg);
    return cfg;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: " + path + ": " + e.what());
  }
}

inline void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << config_to_json(cfg).dump(2) << "\n";
}

// --- scene assembly ---------------------------------------------------------

inline RoiGrid grid_for(const ExperimentConfig& cfg) {
  return build_grid(cfg.grid_nx, cfg.grid_ny, cfg.cell_size, cfg.roi_center);
}

inline SceneGeometry scene_geometry_for(const ExperimentConfig& cfg, int ris_count) {
  const auto it = cfg.ris_placements.find(ris_count);
  if (it == cfg.ris_placements.end() || static_cast<int>(it->second.size()) != ris_count)
    throw std::invalid_argument("scene_geometry_for: no placement for " +
                                std::to_string(ris_count) + " panels");
  SceneGeometry scene;
  scene.tx_antennas = cfg.tx_antennas;
  scene.rx_antennas = cfg.rx_antennas;
  for (const Point3& center : it->second)
    scene.ris.push_back(build_ris_array(center, cfg.ris_rows, cfg.ris_cols, cfg.ris_pitch));
  scene.roi_centers = grid_for(cfg).unit_centers();
  return scene;
}

inline SensingMatrix build_matrix_for(const ExperimentConfig& cfg, int ris_count) {
  const SceneGeometry scene = scene_geometry_for(cfg, ris_count);
  std::vector<int> element_counts;
  for (const PlanarArray& panel : scene.ris) element_counts.push_back(panel.element_count());
  const PhaseSchedule schedule =
      generate_phase_schedule(cfg.symbols, element_counts, phase_seed(cfg, ris_count));
  RadioConfig radio{cfg.frequency_hz, cfg.gain};
  return build_sensing_matrix(scene, schedule, radio);
}

// Fingerprint over everything that shapes the matrix, so a cache file can only
// ever be loaded back into the exact configuration that produced it.
inline std::uint64_t matrix_fingerprint(const ExperimentConfig& cfg, int ris_count) {
  std::uint64_t h = mix64(0x5249534d00000001ull);  // cache format id
  const auto fold = [&h](std::uint64_t v) { h = mix64(h ^ v); };
  const auto fold_double = [&](double v) { fold(std::bit_cast<std::uint64_t>(v)); };
  const auto fold_point = [&](const Point3& p) {
    fold_double(p.x);
    fold_double(p.y);
    fold_double(p.z);
  };
  fold_double(cfg.frequency_hz);
  fold_double(cfg.gain.real());
  fold_double(cfg.gain.imag());
  fold(static_cast<std::uint64_t>(cfg.symbols));
  fold(phase_seed(cfg, ris_count));
  fold(static_cast<std::uint64_t>(cfg.grid_nx));
  fold(static_cast<std::uint64_t>(cfg.grid_ny));
  fold_double(cfg.cell_size);
  fold_point(cfg.roi_center);
  fold(cfg.tx_antennas.size());
  for (const Point3& p : cfg.tx_antennas) fold_point(p);
  fold(cfg.rx_antennas.size());
  for (const Point3& p : cfg.rx_antennas) fold_point(p);
  fold(static_cast<std::uint64_t>(cfg.ris_rows));
  fold(static_cast<std::uint64_t>(cfg.ris_cols));
  fold_double(cfg.ris_pitch);
  fold(static_cast<std::uint64_t>(ris_count));
  for (const Point3& p : cfg.ris_placements.at(ris_count)) fold_point(p);
  return h;
}

inline std::string matrix_cache_name(const ExperimentConfig& cfg, int ris_count) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "matrix-%dris-%016llx.rism", ris_count,
                static_cast<unsigned long long>(matrix_fingerprint(cfg, ris_count)));
  return buf;
}

// Per-sweep immutable state: the lot layout plus one sensing matrix and one
// prepared pursuit solver per swept panel count.  With a cache directory,
// matrices are loaded from disk when a file with the matching fingerprint
// exists and written there after a fresh build.
class SweepContext {
 public:
  explicit SweepContext(const ExperimentConfig& cfg, const std::string& cache_dir = {})
      : grid_(grid_for(cfg)), layout_(build_parking_layout(grid_, cfg.lane_rows)) {
    std::vector<int> counts = cfg.ris_counts;
    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
    for (int t : counts) {
      SensingMatrix a;
      bool loaded = false;
      std::filesystem::path cache_path;
      if (!cache_dir.empty()) {
        cache_path = std::filesystem::path(cache_dir) / matrix_cache_name(cfg, t);
        if (std::filesystem::exists(cache_path)) {
          a = load_matrix_cache(cache_path.string());
          const Eigen::Index expect_rows = static_cast<Eigen::Index>(cfg.tx_antennas.size()) *
                                           cfg.symbols * t *
                                           static_cast<Eigen::Index>(cfg.rx_antennas.size());
          if (a.entries.rows() != expect_rows || a.entries.cols() != grid_.unit_count())
            throw std::runtime_error("matrix cache " + cache_path.string() +
                                     " has wrong dimensions for this config");
          a.n_tx = static_cast<int>(cfg.tx_antennas.size());
          a.symbols = cfg.symbols;
          a.n_ris = t;
          a.n_rx = static_cast<int>(cfg.rx_antennas.size());
          a.units = grid_.unit_count();
          loaded = true;
        }
      }
      if (!loaded) {
        a = build_matrix_for(cfg, t);
        if (!cache_dir.empty()) {
          std::filesystem::create_directories(cache_dir);
          save_matrix_cache(a, cache_path.string());
        }
      }
      solvers_.emplace(t, SpSolver(a));
      matrices_.emplace(t, std::move(a));
    }
  }

  const RoiGrid& grid() const { return grid_; }
  const ParkingLayout& layout() const { return layout_; }

  const SensingMatrix& matrix(int ris_count) const {
    const auto it = matrices_.find(ris_count);
    if (it == matrices_.end())
      throw std::invalid_argument("SweepContext: no matrix prepared for " +
                                  std::to_string(ris_count) + " panels");
    return it->second;
  }

  const SpSolver& solver(int ris_count) const {
    const auto it = solvers_.find(ris_count);
    if (it == solvers_.end())
      throw std::invalid_argument("SweepContext: no solver prepared for " +
                                  std::to_string(ris_count) + " panels");
    return it->second;
  }

 private:
  RoiGrid grid_;
  ParkingLayout layout_;
  std::map<int, SensingMatrix> matrices_;
  std::map<int, SpSolver> solvers_;
};

// --- trials and sweeps ------------------------------------------------------

struct SweepPoint {
  int ris_count = 0;
  double snr_db = 0.0;
  int vehicle_count = 0;
};

struct TrialRecord {
  SweepPoint point;
  std::uint64_t trial_index = 0;
  MetricsReport metrics;
};

inline TrialRecord run_trial(const ExperimentConfig& cfg, const SweepContext& ctx,
                             const SweepPoint& point, std::uint64_t trial_index) {
  const SensingMatrix& a = ctx.matrix(point.ris_count);
  const ParkingLayout& layout = ctx.layout();
  Rng rng = make_rng(
      trial_seed(cfg, point.ris_count, point.snr_db, point.vehicle_count, trial_index));

  const ScatteringScene scene = generate_scene(layout, point.vehicle_count, rng);
  CVector reference;
  switch (cfg.reference_mode) {
    case ReferenceMode::averaged:
      reference =
          synthesize_reference(a, scene.sigma0, cfg.reference_sessions, point.snr_db, rng);
      break;
    case ReferenceMode::ideal:
      reference = synthesize_reference(a, scene.sigma0, 1,
                                       std::numeric_limits<double>::infinity(), rng);
      break;
    case ReferenceMode::previous:
      reference = synthesize_occupied(a, scene.sigma0, point.snr_db, rng);
      break;
  }
  const CVector current = synthesize_occupied(a, scene.sigma1, point.snr_db, rng);
  const CVector delta = difference(current, reference);

  int sparsity = cfg.sparsity_mode == SparsityMode::oracle
                     ? layout.units_per_space() * point.vehicle_count
                     : cfg.fixed_sparsity;
  sparsity = std::min<int>(sparsity, static_cast<int>(std::min(a.entries.rows(), a.entries.cols())));

  DifferenceImage image;
  if (sparsity < 1) {
    // Nothing to look for (an oracle budget of zero): report an empty image.
    image.delta_sigma_hat = CVector::Zero(a.entries.cols());
    image.residual_norm = delta.norm();
  } else {
    SpConfig sp{sparsity, cfg.sp_max_iterations, cfg.sp_residual_tolerance, cfg.sp_normalize};
    image = ctx.solver(point.ris_count).recover(delta, sp);
  }

  const OccupancyImage occupancy = classify_units(image.delta_sigma_hat, cfg.detection);
  const std::vector<std::uint8_t> predicted =
      classify_spaces(occupancy, layout, cfg.detection.eta);
  std::vector<std::uint8_t> truth(static_cast<std::size_t>(layout.space_count()), 0);
  for (int id : scene.occupied_spaces) truth[static_cast<std::size_t>(id)] = 1;
  const RVector delta_sigma = scene.sigma1 - scene.sigma0;

  TrialRecord record;
  record.point = point;
  record.trial_index = trial_index;
  record.metrics = compute_metrics(truth, predicted, delta_sigma, image.delta_sigma_hat);
  return record;
}

// --- deterministic parallel execution ---------------------------------------

// Explicit request > RIS_SIM_THREADS > hardware concurrency.
inline unsigned resolve_thread_count(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RIS_SIM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    std::cerr << "RIS_SIM_THREADS=\"" << env << "\" is not a positive integer; ignoring\n";
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// Work-stealing loop over [0, count).  The assignment of indices to threads is
// nondeterministic; callers must key all output by index so results do not
// depend on it.
inline void parallel_for(std::size_t count, unsigned threads,
                         const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  const auto worker = [&] {
    while (!stop.load(std::memory_order_relaxed)) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) break;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        stop.store(true, std::memory_order_relaxed);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// --- sweep driver -----------------------------------------------------------

struct ResultRow {
  int ris_count = 0;
  double snr_db = 0.0;
  int vehicle_count = 0;
  double detection_rate = 0.0;
  std::optional<double> nmse_db;
  double far = 0.0;
  int trials = 0;
  std::uint64_t seed = 0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  double wall_seconds = 0.0;
};

// Runs the full cartesian sweep (ris_counts x snr_db x vehicle_counts) with
// `trials` Monte Carlo repetitions per point.  Every trial draws its RNG from
// a seed derived of (master_seed, point, trial index) and lands in a slot
// keyed by the same index, so the emitted rows are identical whatever the
// thread count.
inline ExperimentResult run_sweep(const ExperimentConfig& cfg, unsigned threads = 0,
                                  const std::string& cache_dir = {}) {
  validate_config(cfg);
  const auto start = std::chrono::steady_clock::now();
  const SweepContext ctx(cfg, cache_dir);

  std::vector<SweepPoint> points;
  for (int t : cfg.ris_counts)
    for (double snr : cfg.snr_db)
      for (int v : cfg.vehicle_counts) points.push_back({t, snr, v});

  const std::size_t trials = static_cast<std::size_t>(cfg.trials);
  std::vector<std::vector<MetricsReport>> reports(
      points.size(), std::vector<MetricsReport>(trials));
  parallel_for(points.size() * trials, resolve_thread_count(threads), [&](std::size_t flat) {
    const std::size_t p = flat / trials;
    const std::size_t i = flat % trials;
    const SweepPoint& point = points[p];
    try {
      reports[p][i] = run_trial(cfg, ctx, point, i).metrics;
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "trial " << i << " at (ris=" << point.ris_count << ", snr=" << point.snr_db
          << ", vehicles=" << point.vehicle_count << ") failed: " << e.what();
      throw std::runtime_error(msg.str());
    }
  });

  ExperimentResult result;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const AggregateMetrics agg = aggregate_metrics(reports[p]);
    ResultRow row;
    row.ris_count = points[p].ris_count;
    row.snr_db = points[p].snr_db;
    row.vehicle_count = points[p].vehicle_count;
    row.detection_rate = agg.detection_rate;
    row.nmse_db = agg.nmse_db;
    row.far = agg.far;
    row.trials = agg.trials;
    row.seed = cfg.master_seed;
    result.rows.push_back(row);
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// --- results i/o ------------------------------------------------------------

inline constexpr const char* kResultsHeader =
    "ris_count,snr_db,vehicle_count,detection_rate,nmse_db,far,trials,seed";

// Shortest representation that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string results_to_csv(const ExperimentResult& result) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const ResultRow& r : result.rows) {
    out += std::to_string(r.ris_count) + ",";
    out += format_double(r.snr_db) + ",";
    out += std::to_string(r.vehicle_count) + ",";
    out += format_double(r.detection_rate) + ",";
    out += (r.nmse_db ? format_double(*r.nmse_db) : std::string("nan")) + ",";
    out += format_double(r.far) + ",";
    out += std::to_string(r.trials) + ",";
    out += std::to_string(r.seed) + "\n";
  }
  return out;
}

// Writes results.csv plus a manifest.json echoing the exact configuration.
inline void write_results(const ExperimentResult& result, const ExperimentConfig& cfg,
                          const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  {
    std::ofstream csv(dir / "results.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw std::runtime_error("write_results: cannot write " + (dir / "results.csv").string());
    csv << results_to_csv(result);
  }
  {
    nlohmann::json manifest{
        {"tool", {{"name", kToolName}, {"version", kToolVersion}}},
        {"wall_time_seconds", result.wall_seconds},
        {"rows", result.rows.size()},
        {"config", config_to_json(cfg)},
    };
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("write_results: cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
  }
}

inline ExperimentResult read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_results_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_results_csv: " + path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader)
    throw std::runtime_error("read_results_csv: unexpected header in " + path);
  ExperimentResult result;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw std::runtime_error("read_results_csv: malformed row \"" + line + "\"");
    ResultRow row;
    row.ris_count = std::stoi(fields[0]);
    row.snr_db = std::stod(fields[1]);
    row.vehicle_count = std::stoi(fields[2]);
    row.detection_rate = std::stod(fields[3]);
    if (fields[4] != "nan") row.nmse_db = std::stod(fields[4]);
    row.far = std::stod(fields[5]);
    row.trials = std::stoi(fields[6]);
    row.seed = std::stoull(fields[7]);
    result.rows.push_back(row);
  }
  return result;
}

inline std::string format_table(const ExperimentResult& result) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%4s %8s %9s %10s %10s %10s %7s\n", "ris", "snr_db",
                "vehicles", "rate", "nmse_db", "far", "trials");
  out << buf;
  for (const ResultRow& r : result.rows) {
    std::string nmse = r.nmse_db ? [&] {
      char n[32];
      std::snprintf(n, sizeof n, "%10.3f", *r.nmse_db);
      return std::string(n);
    }()
                                 : std::string("        --");
    std::snprintf(buf, sizeof buf, "%4d %8g %9d %10.4f %s %10.4f %7d\n", r.ris_count, r.snr_db,
                  r.vehicle_count, r.detection_rate, nmse.c_str(), r.far, r.trials);
    out << buf;
  }
  return out.str();
}

}  // namespace rissim
