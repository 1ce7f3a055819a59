#pragma once

#include <vector>

#include "gtmr/dynamics.hpp"
#include "gtmr/optics.hpp"
#include "gtmr/types.hpp"

namespace gtmr {

/// Tracking/communication output y = (p, v, vdot, c_delta, c_delta_rate,
/// range). Fixed 12-component order.
struct OutputVector {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  double cos_delta = 0;
  double cos_delta_rate = 0;
  double range = 0;

  static constexpr int kSize = 12;
  VecX to_vector() const;
  static OutputVector from_vector(const VecX& v);
};

/// Diagonal weights of the stage cost.
struct OcpWeights {
  VecX output_weights;  // 12
  VecX rate_weights;    // n_rotors
  VecX slack_weights;   // n_obstacles

  /// Default weighting: position 10, velocity 1, acceleration 0.1 per axis,
  /// then (10, 10, 2) on the link outputs; rate weight 1e-5; slack weight
  /// 1e4.
  static OcpWeights defaults(int n_rotors, int n_obstacles);
  void validate(int n_rotors, int n_obstacles) const;
};

/// Per-stage reference and environment data along the horizon.
struct StageData {
  OutputVector reference;
  std::vector<Vec3> obstacle_centers;
  std::vector<double> obstacle_radii;
  Vec3 rx_pos = Vec3::Zero();
  Vec3 rx_vel = Vec3::Zero();

  int n_obstacles() const { return static_cast<int>(obstacle_centers.size()); }
};

/// Transcribed finite-horizon problem.
struct OcpProblem {
  int horizon_steps = 50;   // N
  double step = 0.015;      // s
  ExtendedState initial_state;
  std::vector<StageData> stages;  // N + 1
  OcpWeights weights;
  GtmrParams gtmr;
  AllocationMatrices alloc;
  OpticalParams optics;
  double safety_margin = 0.25;  // m

  int n_obstacles() const {
    return stages.empty() ? 0 : stages.front().n_obstacles();
  }
};

OutputVector output_map(const ExtendedState& x, const StageData& stage,
                        const GtmrParams& gtmr, const AllocationMatrices& alloc,
                        const OpticalParams& optics);

/// Half the weighted squared tracking error plus the rate and slack
/// penalties, matching the 1/2 d'Hd convention of the condensed QP.
double stage_cost(const OutputVector& y, const StageData& stage,
                  const ControlRate& u_rate, const VecX& slacks,
                  const OcpWeights& w);

/// Path-constraint values in g >= 0 form for one stage. Speed and
/// acceleration boxes are reported elementwise; obstacle rows include the
/// slack contribution.
struct ConstraintResiduals {
  VecX speed_lower, speed_upper;   // n_rotors each
  VecX accel_lower, accel_upper;   // n_rotors each
  double range_lower = 0, range_upper = 0;
  double cone = 0;
  VecX obstacle;   // n_obstacles, includes +slack
  VecX slack_nonneg;
};

ConstraintResiduals constraint_residuals(const ExtendedState& x,
                                         const ControlRate& u_rate,
                                         const VecX& slacks,
                                         const StageData& stage,
                                         const OcpProblem& problem);

/// Everything the SQP needs from one stage: shooting sensitivity, output
/// linearization, state-dependent constraint rows, and Gauss-Newton cost
/// terms. con_val/con_jac rows are ordered (range_lo, range_hi, cone,
/// obstacle_1..N_O); obstacle values exclude the slack, which enters the QP
/// with unit coefficient.
struct StageLinearization {
  ExtendedState x_next;  // shooting result, valid for k < N
  MatX a;                // d x_next / d x, nx x nx
  MatX b;                // d x_next / d u, nx x nu
  OutputVector y;
  MatX out_jac_x;        // 12 x nx
  MatX out_jac_u;        // 12 x nu (identically zero for this output map)
  VecX con_val;          // 3 + n_obstacles
  MatX con_jac_x;        // (3 + n_obstacles) x nx
  MatX hess_xx;          // Gauss-Newton: out_jac_x^T Q out_jac_x
  MatX hess_uu;          // rate weights (diagonal)
  VecX grad_x;           // out_jac_x^T Q (y - y_d)
  VecX grad_u;           // Q_u * u
};

StageLinearization linearize_stage(const ExtendedState& x,
                                   const ControlRate& u_rate, int stage_index,
                                   const OcpProblem& problem);

/// Linearizes all stages of a trajectory. Stages are independent; with
/// parallel=true the loop runs under OpenMP, the serial path is the
/// reference used by the tests and the benchmark.
std::vector<StageLinearization> linearize_horizon(
    const OcpProblem& problem, const std::vector<ExtendedState>& states,
    const std::vector<ControlRate>& controls, bool parallel);

/// 12 x (nx + nu) output Jacobian (analytic).
void output_jacobian(const ExtendedState& x, const StageData& stage,
                     const GtmrParams& gtmr, const AllocationMatrices& alloc,
                     const OpticalParams& optics, MatX& jac_x, MatX& jac_u);

}  // namespace gtmr
