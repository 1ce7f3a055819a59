// Command-line front end: run closed-loop simulations, validate
// configurations, report metrics, and sweep parameter grids.
//
// Exit codes: 0 success, 1 configuration error, 2 solver/model abort.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "gtmr/sim.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  if (path.empty()) return "";
  std::ifstream in(path);
  if (!in) throw gtmr::ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  int rti_iters = 1;
  double duration = -1;  // <0 = use the scenario's value
};

gtmr::Scenario load(const CommonOpts& o) {
  std::vector<std::string> ov = o.overrides;
  if (o.duration >= 0)
    ov.push_back("scenario.duration = " + std::to_string(o.duration));
  return gtmr::load_scenario(read_file(o.config_path), ov);
}

gtmr::SolverConfig solver_config(const CommonOpts& o) {
  gtmr::SolverConfig cfg;
  cfg.max_sqp_iters = o.rti_iters;
  return cfg;
}

/// Runs one simulation and writes log.csv, metrics.txt, config.normalized
/// into dir. Returns 0 or 2 and fills metrics on success.
int run_one(const gtmr::Scenario& s, const gtmr::SolverConfig& cfg,
            const fs::path& dir, gtmr::Metrics* metrics_out) {
  fs::create_directories(dir);
  const gtmr::SimLog log = gtmr::run_closed_loop(s, cfg);
  gtmr::export_csv(log, (dir / "log.csv").string());
  {
    std::ofstream out(dir / "config.normalized");
    out << gtmr::serialize_scenario(s);
  }
  const gtmr::Metrics m =
      gtmr::compute_metrics_with_bounds(log, s.optics, s.gtmr);
  {
    std::ofstream out(dir / "metrics.txt");
    out << gtmr::metrics_report(m);
    if (log.aborted)
      out << "aborted_at = " << log.abort_time << "\n"
          << "abort_reason = " << log.abort_reason << "\n";
  }
  if (metrics_out) *metrics_out = m;
  if (log.aborted) {
    std::cerr << "solver abort at t = " << log.abort_time << " s: "
              << log.abort_reason << "\n";
    return 2;
  }
  return 0;
}

int cmd_run(const CommonOpts& o) {
  gtmr::Metrics m;
  const int rc = run_one(load(o), solver_config(o), o.out_dir, &m);
  if (rc == 0) std::cout << gtmr::metrics_report(m);
  return rc;
}

int cmd_validate(const CommonOpts& o) {
  std::cout << gtmr::serialize_scenario(load(o));
  return 0;
}

int cmd_metrics(const CommonOpts& o, const std::string& log_path) {
  const gtmr::Scenario s = load(o);
  const gtmr::SimLog log = gtmr::import_csv(log_path);
  std::cout << gtmr::metrics_report(
      gtmr::compute_metrics_with_bounds(log, s.optics, s.gtmr));
  return 0;
}

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

std::vector<SweepAxis> parse_grid(const std::vector<std::string>& specs) {
  std::vector<SweepAxis> grid;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw gtmr::ConfigError("sweep axis '" + spec +
                              "': expected key=v1,v2,...");
    SweepAxis axis;
    axis.key = spec.substr(0, eq);
    std::istringstream vals(spec.substr(eq + 1));
    std::string v;
    while (std::getline(vals, v, ',')) axis.values.push_back(v);
    if (axis.values.empty())
      throw gtmr::ConfigError("sweep axis '" + spec + "': no values");
    grid.push_back(std::move(axis));
  }
  return grid;
}

int cmd_sweep(const CommonOpts& o, const std::vector<std::string>& grid_specs,
              int jobs) {
  const auto grid = parse_grid(grid_specs);
  if (grid.empty()) throw gtmr::ConfigError("sweep: empty parameter grid");

  // Cartesian product of override combinations.
  std::vector<std::vector<std::string>> combos{{}};
  for (const auto& axis : grid) {
    std::vector<std::vector<std::string>> next;
    for (const auto& c : combos)
      for (const auto& v : axis.values) {
        auto e = c;
        e.push_back(axis.key + " = " + v);
        next.push_back(std::move(e));
      }
    combos = std::move(next);
  }

  // Validate all combinations up front so config errors exit 1 cleanly.
  std::vector<gtmr::Scenario> scenarios;
  for (const auto& combo : combos) {
    CommonOpts oc = o;
    oc.overrides.insert(oc.overrides.end(), combo.begin(), combo.end());
    scenarios.push_back(load(oc));
  }

  const gtmr::SolverConfig cfg = solver_config(o);
  const int n = static_cast<int>(combos.size());
  std::vector<int> codes(n, 0);
  std::vector<gtmr::Metrics> metrics(n);

  if (jobs < 1)
    jobs = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> workers;
  std::atomic<int> next_idx{0};
  for (int w = 0; w < std::min(jobs, n); ++w)
    workers.emplace_back([&]() {
      for (int i = next_idx++; i < n; i = next_idx++) {
        const fs::path dir = fs::path(o.out_dir) / ("run_" + std::to_string(i));
        try {
          codes[i] = run_one(scenarios[i], cfg, dir, &metrics[i]);
        } catch (const std::exception& e) {
          std::cerr << "run_" << i << " failed: " << e.what() << "\n";
          codes[i] = 2;
        }
      }
    });
  for (auto& w : workers) w.join();

  fs::create_directories(o.out_dir);
  std::ofstream summary(fs::path(o.out_dir) / "summary.txt");
  auto emit = [&](std::ostream& out) {
    out << "run overrides exit mean_link_quality rms_velocity_error "
           "min_obstacle_clearance max_slack\n";
    for (int i = 0; i < n; ++i) {
      std::string ov;
      for (const auto& c : combos[i]) ov += (ov.empty() ? "" : ";") + c;
      out << "run_" << i << " \"" << ov << "\" " << codes[i] << " "
          << metrics[i].mean_link_quality << " "
          << metrics[i].rms_velocity_error << " "
          << metrics[i].min_obstacle_clearance << " " << metrics[i].max_slack
          << "\n";
    }
  };
  emit(summary);
  emit(std::cout);

  for (int c : codes)
    if (c != 0) return 2;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Communication-aware NMPC simulator for a tilted multirotor "
               "tracking a ground vehicle over an optical link"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string log_path;
  std::vector<std::string> grid_specs;
  int jobs = 0;

  auto add_common = [&](CLI::App* c, bool with_out) {
    c->add_option("--config", o.config_path,
                  "Configuration file (key = value lines); omit for the "
                  "default scenario");
    c->add_option("--set", o.overrides,
                  "Override a config key, e.g. --set scenario.duration=5")
        ->type_name("KEY=VALUE");
    c->add_option("--rti-iters", o.rti_iters,
                  "SQP iterations per controller update (1 = RTI)");
    c->add_option("--duration", o.duration, "Override the mission duration, s");
    if (with_out) c->add_option("--out", o.out_dir, "Output directory");
  };

  auto* run = app.add_subcommand("run", "Simulate and write log/metrics");
  add_common(run, true);
  auto* validate =
      app.add_subcommand("validate", "Check a config and print its normal form");
  add_common(validate, false);
  auto* metrics =
      app.add_subcommand("metrics", "Recompute metrics from an existing log");
  add_common(metrics, false);
  metrics->add_option("--log", log_path, "log.csv produced by `run`")
      ->required();
  auto* sweep = app.add_subcommand("sweep", "Run a grid of config overrides");
  add_common(sweep, true);
  sweep->add_option("--grid", grid_specs,
                    "Sweep axis, e.g. --grid weights.slack=100,10000 "
                    "(repeatable; axes combine as a Cartesian product)");
  sweep->add_option("--jobs", jobs, "Parallel runs (default: all cores)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(o);
    if (validate->parsed()) return cmd_validate(o);
    if (metrics->parsed()) return cmd_metrics(o, log_path);
    if (sweep->parsed()) return cmd_sweep(o, grid_specs, jobs);
  } catch (const gtmr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
