#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace gtmr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Thrown when an input violates a documented precondition (bad parameter,
/// gimbal lock, degenerate link range, ...).
class ModelError : public std::runtime_error {
public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

/// Physical and geometric description of a generically-tilted multirotor.
/// Rotor i sits at azimuth 2*pi*(i)/n_rotors on a circle of radius arm_length
/// in the body x-y plane; its axis is e3 tilted by tilt_alpha[i] about the
/// radial direction and tilt_beta[i] about the tangential direction.
struct GtmrParams {
  int n_rotors = 6;
  double mass = 2.57;          // kg
  double gravity = 9.81;       // m/s^2
  Vec3 inertia_diag{0.11, 0.11, 0.19};  // kg m^2
  double thrust_coeff = 1.18e-3;        // N per (rotor speed in Hz)^2
  double torque_coeff = 2.5e-5;         // N m per (rotor speed in Hz)^2
  double arm_length = 0.4;              // m
  std::vector<double> tilt_alpha;       // rad, per rotor
  std::vector<double> tilt_beta;        // rad, per rotor
  std::vector<double> spin_dir;         // +1 / -1, per rotor
  double speed_min = 16.0;    // Hz
  double speed_max = 100.0;   // Hz
  double accel_min = -200.0;  // Hz/s
  double accel_max = 400.0;   // Hz/s

  /// Hexarotor with all rotors parallel to body z.
  static GtmrParams coplanar_hexa();
  /// Hexarotor with alternating-sign 20 deg alpha tilt (the fully actuated
  /// default configuration).
  static GtmrParams tilted_hexa(double alpha_rad = 20.0 * M_PI / 180.0);

  void validate() const;
};

/// Rigid-body state: world-frame position/velocity, ZYX Euler angles,
/// body-frame angular rates.
struct RigidBodyState {
  Vec3 position = Vec3::Zero();
  Vec3 euler = Vec3::Zero();     // (roll, pitch, yaw)
  Vec3 velocity = Vec3::Zero();
  Vec3 body_rates = Vec3::Zero();
};

/// Rigid-body state augmented with per-rotor mechanical speeds (Hz).
/// Thrust uses the squared speed internally.
struct ExtendedState {
  RigidBodyState body;
  VecX rotor_speeds;  // Hz, size n_rotors

  int dim() const { return 12 + static_cast<int>(rotor_speeds.size()); }
  VecX to_vector() const;
  static ExtendedState from_vector(const VecX& v, int n_rotors);
};

/// Control input of the extended model: per-rotor speed rates (Hz/s).
struct ControlRate {
  VecX rotor_accels;  // Hz/s, size n_rotors
};

/// Columns give the body-frame force / torque of each rotor per unit
/// squared rotor speed.
struct AllocationMatrices {
  MatX force_map;   // 3 x n_rotors
  MatX torque_map;  // 3 x n_rotors
};

// Margin below pi/2 at which the Euler-rate map is treated as singular.
inline constexpr double kPitchSingularityMargin = 1e-3;

}  // namespace gtmr
