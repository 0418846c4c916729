// Command-line front end: build/cache sensing matrices, run single sweep
// points, run full sweeps, and pretty-print result files.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "rissim/rissim.hpp"

namespace {

rissim::ExperimentConfig load_or_default(const std::string& path) {
  if (path.empty()) {
    rissim::ExperimentConfig cfg;
    rissim::validate_config(cfg);
    return cfg;
  }
  return rissim::load_config(path);
}

double parse_snr(const std::string& text) {
  if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double value = std::stod(text, &used);
  if (used != text.size())
    throw CLI::ValidationError("--snr", "'" + text + "' is not a number or \"inf\"");
  return value;
}

struct CommonOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  unsigned threads = 0;
};

void add_common(CLI::App* sub, CommonOptions& opt) {
  sub->add_option("--config", opt.config_path, "JSON config file (defaults used when omitted)");
  sub->add_option("--seed", opt.seed, "master seed override")->each([&](const std::string&) {
    opt.seed_given = true;
  });
  sub->add_option("--threads", opt.threads,
                  "worker threads (default: RIS_SIM_THREADS, then hardware)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parking-lot occupancy sensing simulator (multi-panel reflective setup)"};
  app.require_subcommand(1);

  // --- build-matrix ---------------------------------------------------------
  auto* build = app.add_subcommand("build-matrix", "precompute sensing matrices into a cache dir");
  CommonOptions build_opt;
  add_common(build, build_opt);
  std::string build_out;
  std::vector<int> build_counts;
  build->add_option("--out", build_out, "cache directory")->required();
  build->add_option("--ris-count", build_counts, "panel counts (default: config sweep list)");

  // --- run ------------------------------------------------------------------
  auto* run = app.add_subcommand("run", "run trials at a single sweep point");
  CommonOptions run_opt;
  add_common(run, run_opt);
  std::string run_snr = "30";
  int run_vehicles = 15;
  int run_ris = 2;
  int run_trials = 0;
  std::string run_out;
  run->add_option("--snr", run_snr, "SNR in dB, or \"inf\"");
  run->add_option("--vehicles", run_vehicles, "number of parked vehicles");
  run->add_option("--ris-count", run_ris, "number of panels");
  run->add_option("--trials", run_trials, "Monte Carlo trials (default: config)");
  run->add_option("--out", run_out, "also write results.csv + manifest.json here");

  // --- sweep ----------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "run the configured sweep and write results");
  CommonOptions sweep_opt;
  add_common(sweep, sweep_opt);
  std::string sweep_out;
  std::vector<std::string> sweep_snr;
  std::vector<int> sweep_vehicles;
  std::vector<int> sweep_counts;
  int sweep_trials = 0;
  bool sweep_fast = false;
  std::string sweep_cache;
  sweep->add_option("--out", sweep_out, "output directory")->required();
  sweep->add_option("--snr", sweep_snr, "SNR list override (numbers or \"inf\")");
  sweep->add_option("--vehicles", sweep_vehicles, "vehicle-count list override");
  sweep->add_option("--ris-count", sweep_counts, "panel-count list override");
  sweep->add_option("--trials", sweep_trials, "trials per point override");
  sweep->add_flag("--fast", sweep_fast, "quick mode: 100 trials per point");
  sweep->add_option("--matrix-cache", sweep_cache, "directory for cached sensing matrices");

  // --- report ---------------------------------------------------------------
  auto* report = app.add_subcommand("report", "print a results.csv as a table");
  std::string report_path;
  report->add_option("path", report_path, "results.csv or a directory holding one")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(build)) {
      rissim::ExperimentConfig cfg = load_or_default(build_opt.config_path);
      if (build_opt.seed_given) cfg.master_seed = build_opt.seed;
      std::vector<int> counts = build_counts.empty() ? cfg.ris_counts : build_counts;
      std::filesystem::create_directories(build_out);
      for (int t : counts) {
        const rissim::SensingMatrix a = rissim::build_matrix_for(cfg, t);
        const auto path = std::filesystem::path(build_out) / rissim::matrix_cache_name(cfg, t);
        rissim::save_matrix_cache(a, path.string());
        std::cout << path.string() << "  (" << a.entries.rows() << " x " << a.entries.cols()
                  << ")\n";
      }
    } else if (app.got_subcommand(run)) {
      rissim::ExperimentConfig cfg = load_or_default(run_opt.config_path);
      if (run_opt.seed_given) cfg.master_seed = run_opt.seed;
      cfg.snr_db = {parse_snr(run_snr)};
      cfg.vehicle_counts = {run_vehicles};
      cfg.ris_counts = {run_ris};
      if (run_trials > 0) cfg.trials = run_trials;
      const rissim::ExperimentResult result = rissim::run_sweep(cfg, run_opt.threads);
      std::cout << rissim::format_table(result);
      if (!run_out.empty()) {
        rissim::write_results(result, cfg, run_out);
        std::cout << "wrote " << (std::filesystem::path(run_out) / "results.csv").string() << "\n";
      }
    } else if (app.got_subcommand(sweep)) {
      rissim::ExperimentConfig cfg = load_or_default(sweep_opt.config_path);
      if (sweep_opt.seed_given) cfg.master_seed = sweep_opt.seed;
      if (!sweep_snr.empty()) {
        cfg.snr_db.clear();
        for (const std::string& s : sweep_snr) cfg.snr_db.push_back(parse_snr(s));
      }
      if (!sweep_vehicles.empty()) cfg.vehicle_counts = sweep_vehicles;
      if (!sweep_counts.empty()) cfg.ris_counts = sweep_counts;
      if (sweep_fast) cfg.trials = 100;
      if (sweep_trials > 0) cfg.trials = sweep_trials;  // explicit count beats --fast
      const rissim::ExperimentResult result = rissim::run_sweep(cfg, sweep_opt.threads, sweep_cache);
      rissim::write_results(result, cfg, sweep_out);
      std::cout << rissim::format_table(result);
      std::fprintf(stdout, "wrote %s (%zu rows, %.1f s)\n",
                   (std::filesystem::path(sweep_out) / "results.csv").string().c_str(),
                   result.rows.size(), result.wall_seconds);
    } else if (app.got_subcommand(report)) {
      std::filesystem::path path(report_path);
      if (std::filesystem::is_directory(path)) path /= "results.csv";
      const rissim::ExperimentResult result = rissim::read_results_csv(path.string());
      std::cout << rissim::format_table(result);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
