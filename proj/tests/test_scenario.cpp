#include <doctest.h>

#include "gtmr/dynamics.hpp"
#include "gtmr/scenario.hpp"

using namespace gtmr;

TEST_CASE("default scenario matches the reference experiment parameters") {
  const Scenario s = load_scenario("");
  CHECK(s.duration == doctest::Approx(26.0));
  CHECK(s.gtmr.n_rotors == 6);
  CHECK(s.gtmr.mass == doctest::Approx(2.57));
  CHECK(s.gtmr.thrust_coeff == doctest::Approx(1.18e-3));
  CHECK(s.gtmr.torque_coeff == doctest::Approx(2.5e-5));
  CHECK(s.gtmr.inertia_diag.x() == doctest::Approx(0.11));
  CHECK(s.gtmr.inertia_diag.z() == doctest::Approx(0.19));
  CHECK(s.gtmr.speed_min == doctest::Approx(16.0));
  CHECK(s.gtmr.speed_max == doctest::Approx(100.0));
  CHECK(s.gtmr.accel_min == doctest::Approx(-200.0));
  CHECK(s.gtmr.accel_max == doctest::Approx(400.0));
  CHECK(s.optics.cone_cos_threshold == doctest::Approx(0.17));
  CHECK(s.optics.tx_half_power == doctest::Approx(10.0 * M_PI / 180));
  CHECK(s.optics.rx_fov == doctest::Approx(89.0 * M_PI / 180));
  CHECK(s.optics.range_min == doctest::Approx(0.25));
  CHECK(s.optics.range_max == doctest::Approx(1.4));
  CHECK(s.optics.desired_range == doctest::Approx(1.0));
  CHECK((s.optics.tx_offset_body - Vec3(0.1, 0, 0)).norm() < 1e-12);
  CHECK(s.optics.rx_window == doctest::Approx(26.0));
  CHECK(s.horizon_steps == 50);
  CHECK(s.horizon_step == doctest::Approx(0.015));
  CHECK(s.reference_hz == doctest::Approx(200.0));
  CHECK(s.control_hz == doctest::Approx(500.0));
  CHECK(s.plant_hz == doctest::Approx(1000.0));
  CHECK(s.safety_margin == doctest::Approx(0.25));
  CHECK(s.obstacles.size() == 3);
  CHECK(s.obstacles[0].radius == doctest::Approx(0.25));
  CHECK(s.ugv_path.size() == 5);
  // Q-bar = diag(10, 1, 0.1) per axis block, link weights (10, 10, 2).
  CHECK(s.weights.output_weights(0) == doctest::Approx(10.0));
  CHECK(s.weights.output_weights(3) == doctest::Approx(1.0));
  CHECK(s.weights.output_weights(6) == doctest::Approx(0.1));
  CHECK(s.weights.output_weights(9) == doctest::Approx(10.0));
  CHECK(s.weights.output_weights(10) == doctest::Approx(10.0));
  CHECK(s.weights.output_weights(11) == doctest::Approx(2.0));
  CHECK(s.weights.rate_weights(0) == doctest::Approx(1e-5));
  CHECK(s.weights.slack_weights(0) == doctest::Approx(1e4));
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("serialize/load round trip is the identity on the normal form") {
  const Scenario s = load_scenario("");
  const std::string text = serialize_scenario(s);
  const Scenario back = load_scenario(text);
  CHECK(serialize_scenario(back) == text);
}

TEST_CASE("overrides apply after the file content") {
  const Scenario s = load_scenario("scenario.duration = 10\n",
                                   {"scenario.duration = 5"});
  CHECK(s.duration == doctest::Approx(5.0));
}

TEST_CASE("comments, blank lines, and whitespace are tolerated") {
  const Scenario s = load_scenario(
      "# a comment\n\n  scenario.duration = 12  # trailing comment\n");
  CHECK(s.duration == doctest::Approx(12.0));
}

TEST_CASE("unknown keys and malformed values are hard errors") {
  CHECK_THROWS_AS(load_scenario("no.such.key = 1\n"), ConfigError);
  CHECK_THROWS_AS(load_scenario("scenario.duration = banana\n"), ConfigError);
  CHECK_THROWS_AS(load_scenario("scenario.duration\n"), ConfigError);
  CHECK_THROWS_AS(load_scenario("scenario.workspace = 1 2\n"), ConfigError);
  // Line numbers appear in the diagnostics.
  try {
    load_scenario("# line 1\nbad.key = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("bad.key") != std::string::npos);
  }
}

TEST_CASE("validation rejects inconsistent scenarios") {
  CHECK_THROWS_AS(load_scenario("rates.plant_hz = 900\n"), ConfigError);
  CHECK_THROWS_AS(load_scenario("scenario.duration = -1\n"), ConfigError);
  CHECK_THROWS_AS(load_scenario("horizon.steps = 0\n"), ConfigError);
  CHECK_THROWS_AS(load_scenario("obstacle1.radius = -0.1\n"), ConfigError);
  CHECK_THROWS_AS(load_scenario("gtmr.speed_min = 200\n"), ConfigError);
  CHECK_THROWS_AS(load_scenario("obstacle9.radius = 1\n"), ConfigError);
}

TEST_CASE("ugv path: square loop traversed counter-clockwise") {
  const Scenario s = load_scenario("");
  Vec3 pos, vel;
  ugv_state(0.0, s, pos, vel);
  CHECK((pos - Vec3(-3, -3, 0)).norm() < 1e-12);
  CHECK(vel.x() == doctest::Approx(24.0 / 26.0));
  CHECK(vel.y() == doctest::Approx(0.0));

  ugv_state(6.5, s, pos, vel);
  CHECK((pos - Vec3(3, -3, 0)).norm() < 1e-9);

  ugv_state(9.75, s, pos, vel);  // halfway up the second edge
  CHECK(pos.x() == doctest::Approx(3.0));
  CHECK(pos.y() == doctest::Approx(0.0));
  CHECK(vel.y() == doctest::Approx(24.0 / 26.0));

  ugv_state(26.0, s, pos, vel);
  CHECK((pos - Vec3(-3, -3, 0)).norm() < 1e-9);

  CHECK_THROWS_AS(ugv_state(-0.1, s, pos, vel), ModelError);
  CHECK_THROWS_AS(ugv_state(27.0, s, pos, vel), ModelError);
}

TEST_CASE("mrav reference hovers one meter above the ugv") {
  const Scenario s = load_scenario("");
  const OutputVector y = mrav_reference(0.0, s);
  CHECK((y.position - Vec3(-3, -3, 1)).norm() < 1e-12);
  CHECK(y.velocity.x() == doctest::Approx(24.0 / 26.0));
  CHECK(y.acceleration.norm() == 0.0);
  CHECK(y.cos_delta == doctest::Approx(1.0));
  CHECK(y.cos_delta_rate == doctest::Approx(0.0));
  CHECK(y.range == doctest::Approx(1.0));
}

TEST_CASE("obstacle trajectories interpolate inside their windows") {
  const Scenario s = load_scenario("");
  // Obstacle 1 is static.
  CHECK((obstacle_position(1, 0.0, s) - Vec3(1.5, -3, 0.75)).norm() < 1e-12);
  CHECK((obstacle_position(1, 20.0, s) - Vec3(1.5, -3, 0.75)).norm() < 1e-12);
  // Obstacle 2 moves from (5,1,2) to (2,-1,0.5) during [6, 10].
  CHECK((obstacle_position(2, 5.0, s) - Vec3(5, 1, 2)).norm() < 1e-12);
  CHECK((obstacle_position(2, 8.0, s) - Vec3(3.5, 0, 1.25)).norm() < 1e-12);
  CHECK((obstacle_position(2, 12.0, s) - Vec3(2, -1, 0.5)).norm() < 1e-12);
  CHECK_THROWS_AS(obstacle_position(4, 0.0, s), ModelError);
}

TEST_CASE("receiver pointing: ideal and lagged") {
  const Vec3 rx(0, 0, 0), tx(0, 0, 2);
  // Ideal pointing snaps to the target direction.
  CHECK((receiver_axis(rx, tx, Vec3::UnitX(), 0.01, 0.0) - Vec3::UnitZ())
            .norm() < 1e-12);
  // Lagged pointing shrinks the angular error by exp(-dt/tau).
  const double tau = 0.1, dt = 0.05;
  const Vec3 moved = receiver_axis(rx, tx, Vec3::UnitX(), dt, tau);
  const double residual = std::acos(moved.dot(Vec3::UnitZ()));
  CHECK(residual ==
        doctest::Approx((M_PI / 2) * std::exp(-dt / tau)).epsilon(1e-9));
  CHECK(moved.norm() == doctest::Approx(1.0));
  CHECK_THROWS_AS(receiver_axis(rx, rx, Vec3::UnitX(), dt, tau), ModelError);
}

TEST_CASE("stage data lookups clamp beyond the mission end") {
  const Scenario s = load_scenario("");
  const StageData sd = stage_data_at(100.0, s);
  CHECK((sd.rx_pos - Vec3(-3, -3, 0)).norm() < 1e-9);
  CHECK(sd.obstacle_centers.size() == 3);
  const StageData sd0 = stage_data_at(0.0, s);
  CHECK((sd0.reference.position - Vec3(-3, -3, 1)).norm() < 1e-12);
}

TEST_CASE("initial state is at rest at the spawn point with hover rotors") {
  const Scenario s = load_scenario("");
  const ExtendedState x = s.initial_state();
  CHECK((x.body.position - Vec3(-3.25, -3.25, 1.0)).norm() < 1e-12);
  CHECK(x.body.velocity.norm() == 0.0);
  CHECK(x.rotor_speeds.size() == 6);
  CHECK(x.rotor_speeds(0) == doctest::Approx(hover_speed(s.gtmr)));
  CHECK(x.rotor_speeds(0) >= s.gtmr.speed_min);
  CHECK(x.rotor_speeds(0) <= s.gtmr.speed_max);
}

TEST_CASE("rotor-count override resizes the dependent arrays") {
  const Scenario s = load_scenario("gtmr.n_rotors = 4\n");
  CHECK(s.gtmr.tilt_alpha.size() == 4);
  CHECK(s.gtmr.spin_dir.size() == 4);
  CHECK(s.weights.rate_weights.size() == 4);
  CHECK_NOTHROW(s.validate());
}
