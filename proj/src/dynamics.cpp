#include "gtmr/dynamics.hpp"

#include <cmath>

namespace gtmr {

void GtmrParams::validate() const {
  if (mass <= 0) throw ModelError("GtmrParams: mass must be positive");
  if (gravity <= 0) throw ModelError("GtmrParams: gravity must be positive");
  if ((inertia_diag.array() <= 0).any())
    throw ModelError("GtmrParams: inertia_diag must be positive");
  if (n_rotors < 4) throw ModelError("GtmrParams: n_rotors must be >= 4");
  if (!(speed_min < speed_max))
    throw ModelError("GtmrParams: speed_min must be < speed_max");
  if (!(accel_min < 0 && 0 < accel_max))
    throw ModelError("GtmrParams: accel bounds must straddle zero");
  const auto n = static_cast<size_t>(n_rotors);
  if (tilt_alpha.size() != n || tilt_beta.size() != n || spin_dir.size() != n)
    throw ModelError("GtmrParams: tilt/spin arrays must have n_rotors entries");
  for (double s : spin_dir)
    if (s != 1.0 && s != -1.0)
      throw ModelError("GtmrParams: spin_dir entries must be +1 or -1");
}

GtmrParams GtmrParams::coplanar_hexa() {
  GtmrParams p;
  p.tilt_alpha.assign(6, 0.0);
  p.tilt_beta.assign(6, 0.0);
  p.spin_dir = {1, -1, 1, -1, 1, -1};
  return p;
}

GtmrParams GtmrParams::tilted_hexa(double alpha_rad) {
  GtmrParams p = coplanar_hexa();
  for (int i = 0; i < 6; ++i) p.tilt_alpha[i] = p.spin_dir[i] * alpha_rad;
  return p;
}

VecX ExtendedState::to_vector() const {
  VecX v(dim());
  v.segment<3>(0) = body.position;
  v.segment<3>(3) = body.euler;
  v.segment<3>(6) = body.velocity;
  v.segment<3>(9) = body.body_rates;
  v.tail(rotor_speeds.size()) = rotor_speeds;
  return v;
}

ExtendedState ExtendedState::from_vector(const VecX& v, int n_rotors) {
  ExtendedState x;
  x.body.position = v.segment<3>(0);
  x.body.euler = v.segment<3>(3);
  x.body.velocity = v.segment<3>(6);
  x.body.body_rates = v.segment<3>(9);
  x.rotor_speeds = v.tail(n_rotors);
  return x;
}

namespace {

Mat3 rot_x(double a) {
  Mat3 m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return m;
}
Mat3 rot_y(double a) {
  Mat3 m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return m;
}
Mat3 rot_z(double a) {
  Mat3 m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}
Mat3 drot_x(double a) {
  Mat3 m;
  m << 0, 0, 0, 0, -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a);
  return m;
}
Mat3 drot_y(double a) {
  Mat3 m;
  m << -std::sin(a), 0, std::cos(a), 0, 0, 0, -std::cos(a), 0, -std::sin(a);
  return m;
}
Mat3 drot_z(double a) {
  Mat3 m;
  m << -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a), 0, 0, 0, 0;
  return m;
}

void check_pitch(double pitch) {
  if (std::abs(pitch) >= M_PI / 2 - kPitchSingularityMargin)
    throw ModelError("euler_rate_matrix: pitch within singularity margin");
}

// Rodrigues rotation of e3 about a unit axis.
Vec3 rotate_e3(const Vec3& axis, double angle) {
  const Vec3 e3 = Vec3::UnitZ();
  return e3 * std::cos(angle) + axis.cross(e3) * std::sin(angle) +
         axis * (axis.dot(e3)) * (1 - std::cos(angle));
}

}  // namespace

Mat3 rotation_matrix(const Vec3& euler) {
  return rot_z(euler.z()) * rot_y(euler.y()) * rot_x(euler.x());
}

Mat3 rotation_matrix_deriv(const Vec3& euler, int axis) {
  switch (axis) {
    case 0:
      return rot_z(euler.z()) * rot_y(euler.y()) * drot_x(euler.x());
    case 1:
      return rot_z(euler.z()) * drot_y(euler.y()) * rot_x(euler.x());
    case 2:
      return drot_z(euler.z()) * rot_y(euler.y()) * rot_x(euler.x());
    default:
      throw ModelError("rotation_matrix_deriv: axis out of range");
  }
}

Mat3 euler_rate_matrix(const Vec3& euler) {
  check_pitch(euler.y());
  const double sp = std::sin(euler.x()), cp = std::cos(euler.x());
  const double tt = std::tan(euler.y()), ct = std::cos(euler.y());
  Mat3 m;
  m << 1, sp * tt, cp * tt, 0, cp, -sp, 0, sp / ct, cp / ct;
  return m;
}

Mat3 euler_rate_matrix_deriv(const Vec3& euler, int axis) {
  check_pitch(euler.y());
  const double sp = std::sin(euler.x()), cp = std::cos(euler.x());
  const double tt = std::tan(euler.y()), ct = std::cos(euler.y());
  const double st = std::sin(euler.y());
  Mat3 m = Mat3::Zero();
  if (axis == 0) {
    m << 0, cp * tt, -sp * tt, 0, -sp, -cp, 0, cp / ct, -sp / ct;
  } else if (axis == 1) {
    const double ict2 = 1.0 / (ct * ct);
    m(0, 1) = sp * ict2;
    m(0, 2) = cp * ict2;
    m(2, 1) = sp * st * ict2;
    m(2, 2) = cp * st * ict2;
  } else if (axis != 2) {
    throw ModelError("euler_rate_matrix_deriv: axis out of range");
  }
  return m;
}

AllocationMatrices build_allocation(const GtmrParams& params) {
  params.validate();
  const int n = params.n_rotors;
  AllocationMatrices alloc;
  alloc.force_map.resize(3, n);
  alloc.torque_map.resize(3, n);
  for (int i = 0; i < n; ++i) {
    const double az = 2.0 * M_PI * i / n;
    const Vec3 radial(std::cos(az), std::sin(az), 0);
    const Vec3 tangential(-std::sin(az), std::cos(az), 0);
    const Vec3 motor_pos = params.arm_length * radial;
    // Tilt e3 by alpha about the radial axis, then beta about the tangential
    // axis of the tilted frame (the tangential axis is unaffected by the
    // first rotation, so the fixed axis is used).
    Vec3 z_p = rotate_e3(radial, params.tilt_alpha[i]);
    if (params.tilt_beta[i] != 0.0) {
      const double b = params.tilt_beta[i];
      z_p = z_p * std::cos(b) + tangential.cross(z_p) * std::sin(b) +
            tangential * tangential.dot(z_p) * (1 - std::cos(b));
    }
    alloc.force_map.col(i) = params.thrust_coeff * z_p;
    alloc.torque_map.col(i) = params.thrust_coeff * motor_pos.cross(z_p) +
                              params.spin_dir[i] * params.torque_coeff * z_p;
  }
  return alloc;
}

ExtendedState continuous_dynamics(const ExtendedState& x, const ControlRate& u,
                                  const GtmrParams& params,
                                  const AllocationMatrices& alloc) {
  const VecX omega_sq = x.rotor_speeds.array().square();
  const Mat3 rot = rotation_matrix(x.body.euler);
  const Mat3 rate_map = euler_rate_matrix(x.body.euler);
  const Vec3 inertia = params.inertia_diag;
  const Vec3 w = x.body.body_rates;

  ExtendedState dx;
  dx.body.position = x.body.velocity;
  dx.body.euler = rate_map * w;
  dx.body.velocity = Vec3(0, 0, -params.gravity) +
                     rot * (alloc.force_map * omega_sq) / params.mass;
  const Vec3 torque = alloc.torque_map * omega_sq;
  const Vec3 jw = inertia.asDiagonal() * w;
  dx.body.body_rates = (torque - w.cross(jw)).array() / inertia.array();
  dx.rotor_speeds = u.rotor_accels;
  return dx;
}

ExtendedState rk4_step(const ExtendedState& x, const ControlRate& u, double dt,
                       const GtmrParams& params,
                       const AllocationMatrices& alloc) {
  if (dt <= 0) throw ModelError("rk4_step: dt must be positive");
  const int n = params.n_rotors;
  const VecX x0 = x.to_vector();
  auto f = [&](const VecX& xv) {
    return continuous_dynamics(ExtendedState::from_vector(xv, n), u, params,
                               alloc)
        .to_vector();
  };
  const VecX k1 = f(x0);
  const VecX k2 = f(x0 + 0.5 * dt * k1);
  const VecX k3 = f(x0 + 0.5 * dt * k2);
  const VecX k4 = f(x0 + dt * k3);
  return ExtendedState::from_vector(
      x0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), n);
}

Vec3 acceleration_output(const ExtendedState& x, const GtmrParams& params,
                         const AllocationMatrices& alloc) {
  const VecX omega_sq = x.rotor_speeds.array().square();
  return Vec3(0, 0, -params.gravity) +
         rotation_matrix(x.body.euler) * (alloc.force_map * omega_sq) /
             params.mass;
}

MatX dynamics_jacobian(const ExtendedState& x, const GtmrParams& params,
                       const AllocationMatrices& alloc) {
  const int n = params.n_rotors;
  const int nx = 12 + n;
  MatX jac = MatX::Zero(nx, nx + n);

  const Vec3 w = x.body.body_rates;
  const Vec3 inertia = params.inertia_diag;
  const VecX omega_sq = x.rotor_speeds.array().square();
  const Mat3 rot = rotation_matrix(x.body.euler);
  const Vec3 body_force = alloc.force_map * omega_sq;

  // pdot = v
  jac.block<3, 3>(0, 6).setIdentity();
  // etadot = T(eta) * omega
  for (int a = 0; a < 2; ++a)
    jac.block<3, 1>(3, 3 + a) = euler_rate_matrix_deriv(x.body.euler, a) * w;
  jac.block<3, 3>(3, 9) = euler_rate_matrix(x.body.euler);
  // vdot
  for (int a = 0; a < 3; ++a)
    jac.block<3, 1>(6, 3 + a) =
        rotation_matrix_deriv(x.body.euler, a) * body_force / params.mass;
  for (int i = 0; i < n; ++i)
    jac.block<3, 1>(6, 12 + i) =
        rot * alloc.force_map.col(i) * 2.0 * x.rotor_speeds(i) / params.mass;
  // omegadot
  const Vec3 jw = inertia.asDiagonal() * w;
  const Mat3 dwdot_dw = -skew(w) * Mat3(inertia.asDiagonal()) + skew(jw);
  jac.block<3, 3>(9, 9) = inertia.cwiseInverse().asDiagonal() * dwdot_dw;
  for (int i = 0; i < n; ++i)
    jac.block<3, 1>(9, 12 + i) =
        (alloc.torque_map.col(i) * 2.0 * x.rotor_speeds(i)).array() /
        inertia.array();
  // gammadot = u
  jac.block(12, nx, n, n).setIdentity();
  return jac;
}

void rk4_step_with_sensitivity(const ExtendedState& x, const ControlRate& u,
                               double dt, const GtmrParams& params,
                               const AllocationMatrices& alloc,
                               ExtendedState& x_next, MatX& jac_x,
                               MatX& jac_u) {
  if (dt <= 0) throw ModelError("rk4_step_with_sensitivity: dt must be positive");
  const int n = params.n_rotors;
  const int nx = 12 + n;
  const VecX x0 = x.to_vector();

  auto eval = [&](const VecX& xv, VecX& k, MatX& a) {
    const ExtendedState xs = ExtendedState::from_vector(xv, n);
    k = continuous_dynamics(xs, u, params, alloc).to_vector();
    a = dynamics_jacobian(xs, params, alloc);
  };

  VecX k1, k2, k3, k4;
  MatX a1, a2, a3, a4;
  eval(x0, k1, a1);
  eval(x0 + 0.5 * dt * k1, k2, a2);
  eval(x0 + 0.5 * dt * k2, k3, a3);
  eval(x0 + dt * k3, k4, a4);

  const auto ax = [&](const MatX& a) { return a.leftCols(nx); };
  const auto au = [&](const MatX& a) { return a.rightCols(n); };

  // Stage sensitivities: K_i = dk_i/dx (nx x nx) and dk_i/du (nx x nu).
  const MatX k1x = ax(a1);
  const MatX k1u = au(a1);
  const MatX k2x = ax(a2) * (MatX::Identity(nx, nx) + 0.5 * dt * k1x);
  const MatX k2u = ax(a2) * (0.5 * dt * k1u) + au(a2);
  const MatX k3x = ax(a3) * (MatX::Identity(nx, nx) + 0.5 * dt * k2x);
  const MatX k3u = ax(a3) * (0.5 * dt * k2u) + au(a3);
  const MatX k4x = ax(a4) * (MatX::Identity(nx, nx) + dt * k3x);
  const MatX k4u = ax(a4) * (dt * k3u) + au(a4);

  x_next = ExtendedState::from_vector(
      x0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), n);
  jac_x = MatX::Identity(nx, nx) + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
  jac_u = dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u);
}

MatX acceleration_output_jacobian(const ExtendedState& x,
                                  const GtmrParams& params,
                                  const AllocationMatrices& alloc) {
  const int n = params.n_rotors;
  MatX jac = MatX::Zero(3, 12 + n);
  const VecX omega_sq = x.rotor_speeds.array().square();
  const Vec3 body_force = alloc.force_map * omega_sq;
  const Mat3 rot = rotation_matrix(x.body.euler);
  for (int a = 0; a < 3; ++a)
    jac.block<3, 1>(0, 3 + a) =
        rotation_matrix_deriv(x.body.euler, a) * body_force / params.mass;
  for (int i = 0; i < n; ++i)
    jac.block<3, 1>(0, 12 + i) =
        rot * alloc.force_map.col(i) * 2.0 * x.rotor_speeds(i) / params.mass;
  return jac;
}

double hover_speed(const GtmrParams& params) {
  const double ca = std::cos(params.tilt_alpha.empty() ? 0.0
                                                       : params.tilt_alpha[0]);
  return std::sqrt(params.mass * params.gravity /
                   (params.n_rotors * params.thrust_coeff * ca));
}

}  // namespace gtmr
