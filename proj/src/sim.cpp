#include "gtmr/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gtmr/dynamics.hpp"

namespace gtmr {

namespace {

OcpProblem make_problem(const Scenario& s, const AllocationMatrices& alloc) {
  OcpProblem p;
  p.horizon_steps = s.horizon_steps;
  p.step = s.horizon_step;
  p.weights = s.weights;
  p.gtmr = s.gtmr;
  p.alloc = alloc;
  p.optics = s.optics;
  p.safety_margin = s.safety_margin;
  p.stages.resize(s.horizon_steps + 1);
  return p;
}

void fill_stages(OcpProblem& p, const Scenario& s, double anchor) {
  for (int k = 0; k <= p.horizon_steps; ++k)
    p.stages[k] = stage_data_at(anchor + k * p.step, s);
}

/// Minimum range/cone margins over the predicted trajectory (stages 1..N,
/// the stages the NMPC constrains).
void predicted_margins(const OcpSolution& sol, const OcpProblem& p,
                       double& range_margin, double& cone_margin) {
  range_margin = kInf;
  cone_margin = kInf;
  for (size_t k = 1; k < sol.states.size(); ++k) {
    const OutputVector y = output_map(sol.states[k], p.stages[k], p.gtmr,
                                      p.alloc, p.optics);
    range_margin = std::min(
        range_margin,
        std::min(y.range - p.optics.range_min, p.optics.range_max - y.range));
    cone_margin =
        std::min(cone_margin, y.cos_delta - p.optics.cone_cos_threshold);
  }
}

void clamp_rotors(ExtendedState& x, const GtmrParams& g) {
  for (int i = 0; i < x.rotor_speeds.size(); ++i)
    x.rotor_speeds[i] =
        std::clamp(x.rotor_speeds[i], g.speed_min, g.speed_max);
}

}  // namespace

SimLog run_closed_loop(const Scenario& scenario, const SolverConfig& config) {
  scenario.validate();
  config.validate();

  const double dt = 1.0 / scenario.plant_hz;
  const long steps = std::lround(scenario.duration * scenario.plant_hz);
  const long ctrl_div = std::lround(scenario.plant_hz / scenario.control_hz);
  const long ref_div = std::lround(scenario.plant_hz / scenario.reference_hz);
  const int n_obs = static_cast<int>(scenario.obstacles.size());

  SimLog log;
  log.n_rotors = scenario.gtmr.n_rotors;
  log.n_obstacles = n_obs;
  log.plant_hz = scenario.plant_hz;
  log.records.reserve(steps + 1);

  const AllocationMatrices alloc = build_allocation(scenario.gtmr);
  OcpProblem problem = make_problem(scenario, alloc);

  ExtendedState x = scenario.initial_state();
  ControlRate applied{VecX::Zero(scenario.gtmr.n_rotors)};
  VecX commanded = x.rotor_speeds;
  VecX slacks0 = VecX::Zero(n_obs);
  double kkt = 0;

  OcpSolution warm;
  bool have_warm = false;
  double last_shift_anchor = 0;

  Vec3 rx_axis = Vec3::UnitZ();
  {
    Vec3 rx_pos, rx_vel;
    ugv_state(0.0, scenario, rx_pos, rx_vel);
    rx_axis = receiver_axis(rx_pos, transmitter_position(x, scenario.optics),
                            rx_axis, dt, 0.0);
  }

  auto record_at = [&](double t) {
    SimRecord rec;
    rec.time = t;
    rec.state = x;
    rec.applied = applied;
    rec.commanded_speeds = commanded;
    rec.slacks = slacks0;
    rec.kkt = kkt;

    const StageData now = stage_data_at(t, scenario);
    rec.reference = now.reference;
    rec.output = output_map(x, now, scenario.gtmr, alloc, scenario.optics);

    const Vec3 tx_pos = transmitter_position(x, scenario.optics);
    rx_axis = receiver_axis(now.rx_pos, tx_pos, rx_axis, dt, scenario.rx_lag);
    const Vec3 d_c = link_vector(tx_pos, now.rx_pos);
    rec.link.time = t;
    rec.link.cos_delta = rec.output.cos_delta;
    rec.link.cos_delta_rate = rec.output.cos_delta_rate;
    rec.link.range = rec.output.range;
    rec.link.i_tx = tx_indicator(rec.link.cos_delta, scenario.optics);
    rec.link.i_rx = rx_indicator(rx_axis, d_c, scenario.optics);
    rec.link.i_link = link_indicator(rec.link.i_tx, rec.link.i_rx,
                                     rec.link.range, scenario.optics);

    rec.clearances = VecX::Zero(n_obs);
    for (int j = 0; j < n_obs; ++j)
      rec.clearances[j] =
          (x.body.position - now.obstacle_centers[j]).norm() -
          now.obstacle_radii[j];
    log.records.push_back(std::move(rec));
  };

  for (long i = 0; i < steps; ++i) {
    const double t = i * dt;
    if (i % ref_div == 0) ++log.reference_refreshes;

    if (i % ctrl_div == 0) {
      // Horizon anchored at the most recent reference tick.
      const double anchor = (i / ref_div) / scenario.reference_hz;
      try {
        fill_stages(problem, scenario, anchor);
        problem.initial_state = x;

        SolverConfig cfg = config;
        if (!have_warm) {
          warm = cold_start_guess(problem, x);
          cfg.max_sqp_iters = std::max(config.max_sqp_iters, 50);
          last_shift_anchor = anchor;
        } else {
          while (anchor - last_shift_anchor >= problem.step - 1e-9) {
            warm = shift_warm_start(warm, x);
            last_shift_anchor += problem.step;
          }
          warm.states[0] = x;
        }

        const auto tic = std::chrono::steady_clock::now();
        OcpSolution sol = rti_step(problem, warm, cfg);
        const auto toc = std::chrono::steady_clock::now();
        ++log.controller_invocations;

        SolveRecord sr;
        sr.time = t;
        sr.status = sol.status;
        sr.kkt = sol.kkt_residual;
        sr.qp_iterations = sol.qp_iterations;
        sr.wall_time = std::chrono::duration<double>(toc - tic).count();
        predicted_margins(sol, problem, sr.min_range_margin,
                          sr.min_cone_margin);
        log.solves.push_back(sr);

        if (sol.status == OcpSolution::Status::infeasible_qp) {
          log.aborted = true;
          log.abort_time = t;
          log.abort_reason = "solver reported an infeasible QP";
          record_at(t);
          return log;
        }
        warm = sol;
        have_warm = true;
        applied = sol.controls[0];
        commanded = sol.states[1].rotor_speeds;
        slacks0 = sol.slacks.col(0);
        kkt = sol.kkt_residual;
      } catch (const ModelError& e) {
        log.aborted = true;
        log.abort_time = t;
        log.abort_reason = e.what();
        record_at(t);
        return log;
      }
    }

    record_at(t);

    try {
      x = rk4_step(x, applied, dt, scenario.gtmr, alloc);
      clamp_rotors(x, scenario.gtmr);
    } catch (const ModelError& e) {
      log.aborted = true;
      log.abort_time = t;
      log.abort_reason = e.what();
      return log;
    }
  }

  record_at(steps * dt);
  return log;
}

Metrics compute_metrics(const SimLog& log, const OpticalParams& optics) {
  if (log.records.empty())
    throw ModelError("compute_metrics: empty simulation log");
  Metrics m;

  std::vector<LinkSample> history;
  history.reserve(log.records.size());
  for (const auto& r : log.records) history.push_back(r.link);
  const double t_end = log.records.back().time;
  m.mean_link_quality = moving_average(history, t_end, optics.rx_window);

  const double dt = log.plant_hz > 0 ? 1.0 / log.plant_hz : 0.0;
  long up = 0;
  double vel_sq = 0, range_sq = 0;
  m.min_obstacle_clearance = kInf;
  for (const auto& r : log.records) {
    if (r.link.i_link) ++up;
    vel_sq += (r.output.velocity - r.reference.velocity).squaredNorm();
    const double dr = r.output.range - r.reference.range;
    range_sq += dr * dr;
    if (r.clearances.size() > 0)
      m.min_obstacle_clearance =
          std::min(m.min_obstacle_clearance, r.clearances.minCoeff());
    if (r.slacks.size() > 0)
      m.max_slack = std::max(m.max_slack, r.slacks.maxCoeff());
    if (r.output.cos_delta < optics.cone_cos_threshold)
      m.cone_violations_duration += dt;
  }
  const double n = static_cast<double>(log.records.size());
  m.link_uptime_fraction = up / n;
  m.rms_velocity_error = std::sqrt(vel_sq / n);
  m.rms_range_error = std::sqrt(range_sq / n);
  if (!std::isfinite(m.min_obstacle_clearance)) m.min_obstacle_clearance = 0;
  return m;
}

namespace {

constexpr double kBoundTol = 1e-6;

void append_violations(const SimLog& log, const GtmrParams& g, Metrics& m) {
  for (const auto& r : log.records) {
    bool bad = false;
    for (int i = 0; i < r.state.rotor_speeds.size(); ++i) {
      if (r.state.rotor_speeds[i] < g.speed_min - kBoundTol ||
          r.state.rotor_speeds[i] > g.speed_max + kBoundTol)
        bad = true;
    }
    for (int i = 0; i < r.applied.rotor_accels.size(); ++i) {
      if (r.applied.rotor_accels[i] < g.accel_min - kBoundTol ||
          r.applied.rotor_accels[i] > g.accel_max + kBoundTol)
        bad = true;
    }
    if (bad) ++m.rotor_bound_violations;
  }
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(9) << v;
  return out.str();
}

}  // namespace

Metrics compute_metrics_with_bounds(const SimLog& log,
                                    const OpticalParams& optics,
                                    const GtmrParams& gtmr) {
  Metrics m = compute_metrics(log, optics);
  append_violations(log, gtmr, m);
  return m;
}

void export_csv(const SimLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ModelError("export_csv: cannot open '" + path + "'");
  out << "# gtmr-log v1 n_rotors=" << log.n_rotors
      << " n_obstacles=" << log.n_obstacles << " plant_hz=" << fmt(log.plant_hz)
      << "\n";
  out << "time";
  auto cols = [&](const char* base, int n) {
    for (int i = 1; i <= n; ++i) out << "," << base << i;
  };
  cols("p", 3);
  cols("eta", 3);
  cols("v", 3);
  cols("omega", 3);
  cols("gamma", log.n_rotors);
  cols("u_rate", log.n_rotors);
  cols("cmd_speed", log.n_rotors);
  cols("y", 12);
  cols("ref", 12);
  out << ",cos_delta,cos_delta_rate,range,i_tx,i_rx,i_link";
  cols("clearance", log.n_obstacles);
  cols("slack", log.n_obstacles);
  out << ",kkt,solve_time\n";

  out << std::setprecision(9);
  for (const auto& r : log.records) {
    out << r.time;
    auto vec = [&](const auto& v) {
      for (int i = 0; i < static_cast<int>(v.size()); ++i) out << "," << v[i];
    };
    vec(r.state.body.position);
    vec(r.state.body.euler);
    vec(r.state.body.velocity);
    vec(r.state.body.body_rates);
    vec(r.state.rotor_speeds);
    vec(r.applied.rotor_accels);
    vec(r.commanded_speeds);
    vec(r.output.to_vector());
    vec(r.reference.to_vector());
    out << "," << r.link.cos_delta << "," << r.link.cos_delta_rate << ","
        << r.link.range << "," << r.link.i_tx << "," << r.link.i_rx << ","
        << r.link.i_link;
    vec(r.clearances);
    vec(r.slacks);
    out << "," << r.kkt << "," << r.solve_time << "\n";
  }
  if (!out) throw ModelError("export_csv: write failed for '" + path + "'");
}

SimLog import_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("import_csv: cannot open '" + path + "'");
  SimLog log;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# gtmr-log v1", 0) != 0)
    throw ModelError("import_csv: missing version header");
  {
    std::istringstream hdr(line.substr(13));
    std::string tok;
    while (hdr >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq);
      const double val = std::stod(tok.substr(eq + 1));
      if (key == "n_rotors") log.n_rotors = static_cast<int>(val);
      if (key == "n_obstacles") log.n_obstacles = static_cast<int>(val);
      if (key == "plant_hz") log.plant_hz = val;
    }
  }
  if (!std::getline(in, line))
    throw ModelError("import_csv: missing column header");

  const int np = log.n_rotors, no = log.n_obstacles;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) v.push_back(std::stod(cell));
    const size_t expect = 1 + 12 + 3 * np + 24 + 6 + 2 * no + 2;
    if (v.size() != expect)
      throw ModelError("import_csv: bad column count");
    size_t c = 0;
    SimRecord r;
    auto take3 = [&]() {
      Vec3 x(v[c], v[c + 1], v[c + 2]);
      c += 3;
      return x;
    };
    auto taken = [&](int n) {
      VecX x(n);
      for (int i = 0; i < n; ++i) x[i] = v[c++];
      return x;
    };
    r.time = v[c++];
    r.state.body.position = take3();
    r.state.body.euler = take3();
    r.state.body.velocity = take3();
    r.state.body.body_rates = take3();
    r.state.rotor_speeds = taken(np);
    r.applied.rotor_accels = taken(np);
    r.commanded_speeds = taken(np);
    r.output = OutputVector::from_vector(taken(12));
    r.reference = OutputVector::from_vector(taken(12));
    r.link.time = r.time;
    r.link.cos_delta = v[c++];
    r.link.cos_delta_rate = v[c++];
    r.link.range = v[c++];
    r.link.i_tx = static_cast<int>(v[c++]);
    r.link.i_rx = static_cast<int>(v[c++]);
    r.link.i_link = static_cast<int>(v[c++]);
    r.clearances = taken(no);
    r.slacks = taken(no);
    r.kkt = v[c++];
    r.solve_time = v[c++];
    log.records.push_back(std::move(r));
  }
  return log;
}

std::string metrics_report(const Metrics& m) {
  std::ostringstream out;
  out << "mean_link_quality = " << fmt(m.mean_link_quality) << "\n"
      << "link_uptime_fraction = " << fmt(m.link_uptime_fraction) << "\n"
      << "rms_velocity_error = " << fmt(m.rms_velocity_error) << "\n"
      << "rms_range_error = " << fmt(m.rms_range_error) << "\n"
      << "min_obstacle_clearance = " << fmt(m.min_obstacle_clearance) << "\n"
      << "max_slack = " << fmt(m.max_slack) << "\n"
      << "rotor_bound_violations = " << m.rotor_bound_violations << "\n"
      << "cone_violations_duration = " << fmt(m.cone_violations_duration)
      << "\n";
  return out.str();
}

}  // namespace gtmr
