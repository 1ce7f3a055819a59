#pragma once

#include <string>
#include <vector>

#include "gtmr/ocp.hpp"

namespace gtmr {

/// Spherical obstacle moving on a straight line during [t_start, t_end],
/// stationary outside the window.
struct Obstacle {
  Vec3 start_pos = Vec3::Zero();
  Vec3 end_pos = Vec3::Zero();
  double t_start = 0, t_end = 0;
  double radius = 0.25;  // m
};

struct Waypoint {
  Vec3 position = Vec3::Zero();
  double time = 0;
};

/// Raised on malformed or invalid configuration text.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Full experiment description. The default constructor yields the
/// reference inspection scenario (26 s square UGV loop, tilted hexarotor,
/// three obstacles).
struct Scenario {
  int schema_version = 1;
  double duration = 26.0;  // s
  Vec3 workspace{5, 5, 2};  // m, metadata only
  std::vector<Waypoint> ugv_path;
  Vec3 mrav_initial_position{-3.25, -3.25, 1.0};
  Vec3 mrav_ref_offset{0, 0, 1};
  std::vector<Obstacle> obstacles;
  GtmrParams gtmr;
  OpticalParams optics;
  Vec3 tx_rotation_euler{M_PI, 0, 0};  // ZYX Euler of R_BT (beam down)
  OcpWeights weights;
  double safety_margin = 0.25;  // m
  int horizon_steps = 50;
  double horizon_step = 0.015;  // s
  double reference_hz = 200, control_hz = 500, plant_hz = 1000;
  double rx_lag = 0;  // s, receiver gimbal time constant (0 = ideal)

  Scenario();

  /// Initial extended state: at rest at mrav_initial_position, rotors at
  /// the hover speed clamped into bounds.
  ExtendedState initial_state() const;

  void validate() const;
};

/// Parses the key-value configuration text; empty text yields the default
/// scenario. Unknown keys and invariant violations are hard errors.
/// Override lines (same syntax) are applied after the file content.
Scenario load_scenario(const std::string& text,
                       const std::vector<std::string>& overrides = {});

/// Canonical normalized form: fixed key order, full precision; stable under
/// a load/serialize round trip.
std::string serialize_scenario(const Scenario& s);

/// UGV kinematic reference: piecewise-linear position and edge-tangent
/// velocity along the waypoint path.
void ugv_state(double t, const Scenario& s, Vec3& pos, Vec3& vel);

/// Desired NMPC output at time t: UGV position plus hover offset, UGV
/// velocity, zero acceleration, and the link targets (1, 0, desired range).
OutputVector mrav_reference(double t, const Scenario& s);

/// Center of obstacle j at time t.
Vec3 obstacle_position(int j, double t, const Scenario& s);

/// Receiver pointing law: the axis slews toward the transmitter direction
/// with first-order lag time constant lag_tau (0 = instantaneous).
Vec3 receiver_axis(const Vec3& rx_pos, const Vec3& transmitter_pos,
                   const Vec3& prev_axis, double dt, double lag_tau);

/// Stage data for the NMPC horizon anchored at time t (known future UGV and
/// obstacle trajectories).
StageData stage_data_at(double t, const Scenario& s);

}  // namespace gtmr
