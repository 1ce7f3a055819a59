#pragma once

#include "gtmr/types.hpp"

namespace gtmr {

/// ZYX rotation matrix mapping body-frame vectors to the world frame.
Mat3 rotation_matrix(const Vec3& euler);

/// Partial derivative of rotation_matrix with respect to euler[axis].
Mat3 rotation_matrix_deriv(const Vec3& euler, int axis);

/// Map from body rates to ZYX Euler-angle rates. Throws ModelError within
/// kPitchSingularityMargin of the |pitch| = pi/2 singularity.
Mat3 euler_rate_matrix(const Vec3& euler);

/// Partial derivative of euler_rate_matrix with respect to euler[axis].
Mat3 euler_rate_matrix_deriv(const Vec3& euler, int axis);

/// Builds the body-frame force/torque allocation from the rotor layout.
AllocationMatrices build_allocation(const GtmrParams& params);

/// Time derivative of the extended state (Newton-Euler rigid body plus
/// rotor-speed integrators).
ExtendedState continuous_dynamics(const ExtendedState& x, const ControlRate& u,
                                  const GtmrParams& params,
                                  const AllocationMatrices& alloc);

/// Classical RK4 step with zero-order-hold input.
ExtendedState rk4_step(const ExtendedState& x, const ControlRate& u, double dt,
                       const GtmrParams& params,
                       const AllocationMatrices& alloc);

/// World-frame acceleration of the CoM implied by the current state (the
/// v-dot row of continuous_dynamics).
Vec3 acceleration_output(const ExtendedState& x, const GtmrParams& params,
                         const AllocationMatrices& alloc);

/// Jacobian of the continuous dynamics, d(xdot)/d(x, u), size nx x (nx+nu).
MatX dynamics_jacobian(const ExtendedState& x, const GtmrParams& params,
                       const AllocationMatrices& alloc);

/// Discrete sensitivity of one RK4 step: x_next and d(x_next)/d(x, u),
/// propagated through the four RK stages.
void rk4_step_with_sensitivity(const ExtendedState& x, const ControlRate& u,
                               double dt, const GtmrParams& params,
                               const AllocationMatrices& alloc,
                               ExtendedState& x_next, MatX& jac_x, MatX& jac_u);

/// Jacobian of acceleration_output with respect to the extended state,
/// 3 x (12 + n_rotors).
MatX acceleration_output_jacobian(const ExtendedState& x,
                                  const GtmrParams& params,
                                  const AllocationMatrices& alloc);

/// Rotor speed giving zero net vertical force for a symmetric configuration
/// with common tilt magnitude alpha.
double hover_speed(const GtmrParams& params);

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace gtmr
