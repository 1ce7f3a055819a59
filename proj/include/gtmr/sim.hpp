#pragma once

#include <string>
#include <vector>

#include "gtmr/scenario.hpp"
#include "gtmr/sqp.hpp"

namespace gtmr {

/// One plant-rate log record. `applied` is the rotor acceleration held over
/// [time, time + 1/plant_hz); the final record repeats the last command.
struct SimRecord {
  double time = 0;
  ExtendedState state;
  ControlRate applied;
  VecX commanded_speeds;  // stage-1 rotor speeds predicted by the last solve
  OutputVector output;
  OutputVector reference;
  LinkSample link;
  VecX clearances;  // per obstacle, |p - p_O| - d_O
  VecX slacks;      // stage-0 slack of the last solve
  double kkt = 0;
  // Reserved schema column. Wall time lives in SolveRecord::wall_time; the
  // export stays byte-reproducible, so this field is always written as 0.
  double solve_time = 0;
};

/// Per-solve diagnostics kept outside the CSV schema; margins are minima
/// over the predicted horizon (nonnegative = constraint satisfied).
struct SolveRecord {
  double time = 0;
  OcpSolution::Status status = OcpSolution::Status::converged;
  double kkt = 0;
  int qp_iterations = 0;
  double min_range_margin = 0;  // min over stages of min(r - r_min, r_max - r)
  double min_cone_margin = 0;   // min over stages of c_delta - threshold
  double wall_time = 0;         // s, measured solve duration (not exported)
};

struct SimLog {
  int n_rotors = 0;
  int n_obstacles = 0;
  double plant_hz = 0;
  std::vector<SimRecord> records;
  std::vector<SolveRecord> solves;
  int controller_invocations = 0;
  int reference_refreshes = 0;
  bool aborted = false;
  double abort_time = 0;
  std::string abort_reason;
};

struct Metrics {
  double mean_link_quality = 0;     // windowed average at end of mission
  double link_uptime_fraction = 0;  // fraction of records with i_link = 1
  double rms_velocity_error = 0;    // m/s
  double rms_range_error = 0;       // m
  double min_obstacle_clearance = 0;  // m
  double max_slack = 0;               // m
  int rotor_bound_violations = 0;     // plant steps outside speed/accel boxes
  double cone_violations_duration = 0;  // s with c_delta below the threshold
};

/// Deterministic multirate closed loop: plant integrated at plant_hz, one
/// rti_step every plant_hz/control_hz steps, references refreshed at
/// reference_hz. A solver failure or model error stops the run and returns
/// the partial log with `aborted` set.
SimLog run_closed_loop(const Scenario& scenario, const SolverConfig& config);

Metrics compute_metrics(const SimLog& log, const OpticalParams& optics);

/// compute_metrics plus the rotor speed/acceleration bound-violation count.
Metrics compute_metrics_with_bounds(const SimLog& log,
                                    const OpticalParams& optics,
                                    const GtmrParams& gtmr);

/// CSV schema (header comment `# gtmr-log v1`, then one header row):
///   time, state (p3 eta3 v3 omega3 gamma{Np}), u_rate{Np}, cmd_speed{Np},
///   y1..y12, ref1..ref12, cos_delta, cos_delta_rate, range, i_tx, i_rx,
///   i_link, clearance{No}, slack{No}, kkt, solve_time.
/// Values use 9 significant digits; byte output is deterministic.
void export_csv(const SimLog& log, const std::string& path);

/// Parses a file written by export_csv (solver records are not round-tripped).
SimLog import_csv(const std::string& path);

/// Flat key = value report of a metrics block.
std::string metrics_report(const Metrics& m);

}  // namespace gtmr
