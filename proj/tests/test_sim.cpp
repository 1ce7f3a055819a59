#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gtmr/dynamics.hpp"
#include "gtmr/sim.hpp"

using namespace gtmr;

namespace {

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("zero-duration run yields a single record") {
  const Scenario s = load_scenario("scenario.duration = 0\n");
  const SimLog log = run_closed_loop(s, SolverConfig{});
  CHECK(!log.aborted);
  REQUIRE(log.records.size() == 1);
  CHECK(log.records[0].time == 0.0);
}

TEST_CASE("short run: record count, rate contract, monotone time") {
  const Scenario s = load_scenario("scenario.duration = 0.2\n");
  const SimLog log = run_closed_loop(s, SolverConfig{});
  REQUIRE(!log.aborted);
  CHECK(log.records.size() == 201);  // duration * plant_hz + 1
  CHECK(log.controller_invocations == 100);  // 0.2 s at 500 Hz
  CHECK(log.reference_refreshes == 40);      // 0.2 s at 200 Hz
  for (size_t i = 1; i < log.records.size(); ++i)
    CHECK(log.records[i].time > log.records[i - 1].time);
  CHECK(log.solves.size() == 100);
}

TEST_CASE("two runs produce byte-identical exports") {
  const Scenario s = load_scenario("scenario.duration = 0.1\n");
  const SimLog a = run_closed_loop(s, SolverConfig{});
  const SimLog b = run_closed_loop(s, SolverConfig{});
  export_csv(a, "det_a.csv");
  export_csv(b, "det_b.csv");
  const std::string ba = file_bytes("det_a.csv"), bb = file_bytes("det_b.csv");
  std::remove("det_a.csv");
  std::remove("det_b.csv");
  CHECK(!ba.empty());
  CHECK(ba == bb);
}

TEST_CASE("open-loop hover conserves altitude over the full mission span") {
  const Scenario s = load_scenario("");
  const AllocationMatrices alloc = build_allocation(s.gtmr);
  ExtendedState x = s.initial_state();
  const double z0 = x.body.position.z();
  const ControlRate zero{VecX::Zero(s.gtmr.n_rotors)};
  const double dt = 1.0 / s.plant_hz;
  for (int i = 0; i < 26000; ++i) x = rk4_step(x, zero, dt, s.gtmr, alloc);
  CHECK(std::abs(x.body.position.z() - z0) < 1e-6);
  CHECK(x.body.velocity.norm() < 1e-6);
}

TEST_CASE("csv export/import round trip") {
  const Scenario s = load_scenario("scenario.duration = 0.05\n");
  const SimLog log = run_closed_loop(s, SolverConfig{});
  export_csv(log, "rt.csv");
  const SimLog back = import_csv("rt.csv");
  std::remove("rt.csv");
  REQUIRE(back.records.size() == log.records.size());
  CHECK(back.n_rotors == log.n_rotors);
  CHECK(back.n_obstacles == log.n_obstacles);
  for (size_t i = 0; i < log.records.size(); ++i) {
    const SimRecord& a = log.records[i];
    const SimRecord& b = back.records[i];
    CHECK(std::abs(a.time - b.time) < 1e-8);
    CHECK((a.state.to_vector() - b.state.to_vector()).cwiseAbs().maxCoeff() <
          1e-6);
    CHECK((a.output.to_vector() - b.output.to_vector()).cwiseAbs().maxCoeff() <
          1e-6);
    CHECK(a.link.i_link == b.link.i_link);
    CHECK((a.clearances - b.clearances).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("csv column schema arithmetic") {
  const Scenario s = load_scenario("scenario.duration = 0\n");
  const SimLog log = run_closed_loop(s, SolverConfig{});
  export_csv(log, "schema.csv");
  std::ifstream in("schema.csv");
  std::string comment, header;
  std::getline(in, comment);
  std::getline(in, header);
  in.close();
  std::remove("schema.csv");
  CHECK(comment.rfind("# gtmr-log v1", 0) == 0);
  const auto cols = 1 + std::count(header.begin(), header.end(), ',');
  CHECK(cols == 1 + 18 + 6 + 6 + 12 + 12 + 6 + 3 + 3 + 2);
}

TEST_CASE("metrics on synthetic logs") {
  SimLog log;
  log.n_rotors = 6;
  log.n_obstacles = 1;
  log.plant_hz = 100;
  OpticalParams op;
  for (int i = 0; i <= 100; ++i) {
    SimRecord r;
    r.time = 0.01 * i;
    r.state.rotor_speeds = VecX::Constant(6, 60.0);
    r.applied.rotor_accels = VecX::Zero(6);
    r.commanded_speeds = r.state.rotor_speeds;
    r.link.time = r.time;
    r.link.i_link = 1;
    r.output.velocity = Vec3(1, 0, 0);
    r.reference.velocity = Vec3(1, 0, 0);
    r.output.range = 1.0;
    r.reference.range = 1.0;
    r.output.cos_delta = 1.0;
    r.clearances = VecX::Constant(1, 2.0);
    r.slacks = VecX::Zero(1);
    log.records.push_back(r);
  }
  const Metrics m = compute_metrics(log, op);
  CHECK(m.mean_link_quality == doctest::Approx(1.0));
  CHECK(m.link_uptime_fraction == doctest::Approx(1.0));
  CHECK(m.rms_velocity_error == doctest::Approx(0.0));
  CHECK(m.rms_range_error == doctest::Approx(0.0));
  CHECK(m.min_obstacle_clearance == doctest::Approx(2.0));
  CHECK(m.max_slack == doctest::Approx(0.0));
  CHECK(m.cone_violations_duration == doctest::Approx(0.0));

  // Flipping half the link samples halves the windowed mean.
  for (size_t i = 0; i < log.records.size(); ++i)
    if (log.records[i].time >= 0.5) log.records[i].link.i_link = 0;
  const Metrics m2 = compute_metrics(log, op);
  CHECK(m2.mean_link_quality == doctest::Approx(0.5).epsilon(0.02));
  CHECK_THROWS_AS(compute_metrics(SimLog{}, op), ModelError);
}

TEST_CASE("metrics report is a flat key-value block") {
  Metrics m;
  m.mean_link_quality = 0.5;
  const std::string rep = metrics_report(m);
  CHECK(rep.find("mean_link_quality = 0.5") != std::string::npos);
  CHECK(rep.find("rotor_bound_violations = 0") != std::string::npos);
}

TEST_CASE("integration-refinement consistency: doubling plant rate") {
  const Scenario coarse = load_scenario("scenario.duration = 0.2\n");
  const Scenario fine = load_scenario(
      "scenario.duration = 0.2\nrates.plant_hz = 2000\n");
  const SimLog a = run_closed_loop(coarse, SolverConfig{});
  const SimLog b = run_closed_loop(fine, SolverConfig{});
  REQUIRE(!a.aborted);
  REQUIRE(!b.aborted);
  const Vec3 pa = a.records.back().state.body.position;
  const Vec3 pb = b.records.back().state.body.position;
  CHECK((pa - pb).norm() < 1e-3);
}
