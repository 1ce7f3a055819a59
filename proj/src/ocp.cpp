#include "gtmr/ocp.hpp"

#include <cmath>

namespace gtmr {

VecX OutputVector::to_vector() const {
  VecX v(kSize);
  v.segment<3>(0) = position;
  v.segment<3>(3) = velocity;
  v.segment<3>(6) = acceleration;
  v(9) = cos_delta;
  v(10) = cos_delta_rate;
  v(11) = range;
  return v;
}

OutputVector OutputVector::from_vector(const VecX& v) {
  OutputVector y;
  y.position = v.segment<3>(0);
  y.velocity = v.segment<3>(3);
  y.acceleration = v.segment<3>(6);
  y.cos_delta = v(9);
  y.cos_delta_rate = v(10);
  y.range = v(11);
  return y;
}

OcpWeights OcpWeights::defaults(int n_rotors, int n_obstacles) {
  OcpWeights w;
  w.output_weights.resize(OutputVector::kSize);
  // Position and velocity carry real weight: the alignment outputs alone are
  // nearly flat in the horizontal channel (tilting the beam is cheaper over
  // one horizon than translating), so without them the escort falls behind
  // the receiver and settles into a misaligned towed equilibrium. The rate
  // weight is scaled for rotor accelerations of order 1e2 Hz/s; anything
  // near unity makes every maneuver cost orders of magnitude more than the
  // tracking error it removes, freezing the vehicle.
  w.output_weights << 10, 10, 10, 1, 1, 1, 0.1, 0.1, 0.1, 10, 10, 2;
  w.rate_weights = VecX::Constant(n_rotors, 1e-5);
  w.slack_weights = VecX::Constant(n_obstacles, 1e4);
  return w;
}

void OcpWeights::validate(int n_rotors, int n_obstacles) const {
  if (output_weights.size() != OutputVector::kSize ||
      rate_weights.size() != n_rotors || slack_weights.size() != n_obstacles)
    throw ModelError("OcpWeights: dimension mismatch");
  if ((output_weights.array() < 0).any() || (rate_weights.array() < 0).any())
    throw ModelError("OcpWeights: weights must be nonnegative");
  if ((slack_weights.array() <= 0).any())
    throw ModelError("OcpWeights: slack weights must be positive");
}

OutputVector output_map(const ExtendedState& x, const StageData& stage,
                        const GtmrParams& gtmr, const AllocationMatrices& alloc,
                        const OpticalParams& optics) {
  OutputVector y;
  y.position = x.body.position;
  y.velocity = x.body.velocity;
  y.acceleration = acceleration_output(x, gtmr, alloc);
  const Vec3 d = transmitter_position(x, optics) - stage.rx_pos;
  y.range = d.norm();
  y.cos_delta = misalignment_cosine(beam_axis_world(x, optics), d);
  y.cos_delta_rate = misalignment_rate(x, stage.rx_pos, stage.rx_vel, optics);
  return y;
}

double stage_cost(const OutputVector& y, const StageData& stage,
                  const ControlRate& u_rate, const VecX& slacks,
                  const OcpWeights& w) {
  if ((slacks.array() < 0).any())
    throw ModelError("stage_cost: slacks must be nonnegative");
  const VecX err = stage.reference.to_vector() - y.to_vector();
  return 0.5 * (err.dot(w.output_weights.asDiagonal() * err) +
                u_rate.rotor_accels.dot(w.rate_weights.asDiagonal() *
                                        u_rate.rotor_accels) +
                slacks.dot(w.slack_weights.asDiagonal() * slacks));
}

ConstraintResiduals constraint_residuals(const ExtendedState& x,
                                         const ControlRate& u_rate,
                                         const VecX& slacks,
                                         const StageData& stage,
                                         const OcpProblem& problem) {
  const GtmrParams& g = problem.gtmr;
  ConstraintResiduals r;
  r.speed_lower = x.rotor_speeds.array() - g.speed_min;
  r.speed_upper = g.speed_max - x.rotor_speeds.array();
  r.accel_lower = u_rate.rotor_accels.array() - g.accel_min;
  r.accel_upper = g.accel_max - u_rate.rotor_accels.array();

  const Vec3 d = transmitter_position(x, problem.optics) - stage.rx_pos;
  const double range = d.norm();
  if (range <= kDegenerateRange)
    throw ModelError("constraint_residuals: degenerate link range");
  r.range_lower = range - problem.optics.range_min;
  r.range_upper = problem.optics.range_max - range;
  r.cone = misalignment_cosine(beam_axis_world(x, problem.optics), d) -
           problem.optics.cone_cos_threshold;

  const int n_obs = stage.n_obstacles();
  r.obstacle.resize(n_obs);
  for (int j = 0; j < n_obs; ++j)
    r.obstacle(j) = (x.body.position - stage.obstacle_centers[j]).norm() -
                    (stage.obstacle_radii[j] + problem.safety_margin) +
                    slacks(j);
  r.slack_nonneg = slacks;
  return r;
}

namespace {

// Geometry shared by the cos_delta / range rows of the output and constraint
// Jacobians.
struct LinkGeometry {
  Mat3 rot;
  Mat3 drot[3];
  Vec3 beam_body;   // R_BT e3
  Vec3 beam;        // world beam axis
  Vec3 d;           // transmitter -> receiver offset, p_T - p_R
  double range;
  Vec3 d_hat;
  Mat3 proj;        // (I - d_hat d_hat^T) / range
};

LinkGeometry link_geometry(const ExtendedState& x, const StageData& stage,
                           const OpticalParams& optics) {
  LinkGeometry lg;
  lg.rot = rotation_matrix(x.body.euler);
  for (int a = 0; a < 3; ++a) lg.drot[a] = rotation_matrix_deriv(x.body.euler, a);
  lg.beam_body = optics.tx_rotation_body * Vec3::UnitZ();
  lg.beam = lg.rot * lg.beam_body;
  lg.d = x.body.position + lg.rot * optics.tx_offset_body - stage.rx_pos;
  lg.range = lg.d.norm();
  if (lg.range <= kDegenerateRange)
    throw ModelError("output_jacobian: degenerate link range");
  lg.d_hat = lg.d / lg.range;
  lg.proj = (Mat3::Identity() - lg.d_hat * lg.d_hat.transpose()) / lg.range;
  return lg;
}

}  // namespace

void output_jacobian(const ExtendedState& x, const StageData& stage,
                     const GtmrParams& gtmr, const AllocationMatrices& alloc,
                     const OpticalParams& optics, MatX& jac_x, MatX& jac_u) {
  const int n = gtmr.n_rotors;
  const int nx = 12 + n;
  jac_x = MatX::Zero(OutputVector::kSize, nx);
  jac_u = MatX::Zero(OutputVector::kSize, n);

  jac_x.block<3, 3>(0, 0).setIdentity();
  jac_x.block<3, 3>(3, 6).setIdentity();
  jac_x.middleRows<3>(6) = acceleration_output_jacobian(x, gtmr, alloc);

  const LinkGeometry lg = link_geometry(x, stage, optics);
  const Vec3 w = x.body.body_rates;
  const Vec3 pbt = optics.tx_offset_body;

  // cos_delta = -beam . d_hat
  jac_x.block<1, 3>(9, 0) = -(lg.proj * lg.beam).transpose();
  for (int a = 0; a < 3; ++a) {
    const Vec3 dd = lg.drot[a] * pbt;  // d d / d eta_a
    jac_x(9, 3 + a) = -(lg.drot[a] * lg.beam_body).dot(lg.d_hat) -
                      lg.beam.dot(lg.proj * dd);
  }

  // cos_delta_rate = -beam_dot . d_hat - beam . q,  q = proj * d_dot
  const Vec3 beam_dot = lg.rot * w.cross(lg.beam_body);
  const Vec3 d_dot = x.body.velocity + lg.rot * w.cross(pbt) - stage.rx_vel;
  const Vec3 q = lg.proj * d_dot;
  const double dtd = lg.d.dot(d_dot);
  const double r2 = lg.range * lg.range;
  const double r3 = r2 * lg.range;
  const double r5 = r3 * r2;
  // dq/dd with q = d_dot/|d| - d (d.d_dot)/|d|^3
  const Mat3 dq_dd = -d_dot * lg.d_hat.transpose() / r2 -
                     (Mat3::Identity() * dtd + lg.d * d_dot.transpose()) / r3 +
                     3.0 * dtd / r5 * (lg.d * lg.d.transpose());

  jac_x.block<1, 3>(10, 0) =
      -(lg.proj * beam_dot).transpose() - lg.beam.transpose() * dq_dd;
  jac_x.block<1, 3>(10, 6) = -(lg.proj * lg.beam).transpose();
  jac_x.block<1, 3>(10, 9) =
      lg.d_hat.transpose() * lg.rot * skew(lg.beam_body) +
      lg.beam.transpose() * lg.proj * lg.rot * skew(pbt);
  for (int a = 0; a < 3; ++a) {
    const Vec3 dbeam = lg.drot[a] * lg.beam_body;
    const Vec3 dbeam_dot = lg.drot[a] * w.cross(lg.beam_body);
    const Vec3 dd = lg.drot[a] * pbt;
    const Vec3 dd_dot = lg.drot[a] * w.cross(pbt);
    jac_x(10, 3 + a) = -dbeam_dot.dot(lg.d_hat) - beam_dot.dot(lg.proj * dd) -
                       dbeam.dot(q) -
                       lg.beam.dot(dq_dd * dd + lg.proj * dd_dot);
  }

  // range = |d|
  jac_x.block<1, 3>(11, 0) = lg.d_hat.transpose();
  for (int a = 0; a < 3; ++a)
    jac_x(11, 3 + a) = lg.d_hat.dot(lg.drot[a] * pbt);
}

StageLinearization linearize_stage(const ExtendedState& x,
                                   const ControlRate& u_rate, int stage_index,
                                   const OcpProblem& problem) {
  const StageData& stage = problem.stages.at(stage_index);
  const int n = problem.gtmr.n_rotors;
  const int nx = 12 + n;
  const int n_obs = stage.n_obstacles();
  StageLinearization lin;

  if (stage_index < problem.horizon_steps)
    rk4_step_with_sensitivity(x, u_rate, problem.step, problem.gtmr,
                              problem.alloc, lin.x_next, lin.a, lin.b);

  lin.y = output_map(x, stage, problem.gtmr, problem.alloc, problem.optics);
  output_jacobian(x, stage, problem.gtmr, problem.alloc, problem.optics,
                  lin.out_jac_x, lin.out_jac_u);

  lin.con_val.resize(3 + n_obs);
  lin.con_jac_x = MatX::Zero(3 + n_obs, nx);
  const double range = lin.y.range;
  lin.con_val(0) = range - problem.optics.range_min;
  lin.con_val(1) = problem.optics.range_max - range;
  lin.con_val(2) = lin.y.cos_delta - problem.optics.cone_cos_threshold;
  lin.con_jac_x.row(0) = lin.out_jac_x.row(11);
  lin.con_jac_x.row(1) = -lin.out_jac_x.row(11);
  lin.con_jac_x.row(2) = lin.out_jac_x.row(9);
  for (int j = 0; j < n_obs; ++j) {
    const Vec3 diff = x.body.position - stage.obstacle_centers[j];
    const double dist = diff.norm();
    lin.con_val(3 + j) =
        dist - (stage.obstacle_radii[j] + problem.safety_margin);
    lin.con_jac_x.block<1, 3>(3 + j, 0) =
        diff.transpose() / (dist + 1e-12);
  }

  const VecX err = lin.y.to_vector() - stage.reference.to_vector();
  const MatX wj = problem.weights.output_weights.asDiagonal() * lin.out_jac_x;
  lin.hess_xx = lin.out_jac_x.transpose() * wj;
  lin.hess_uu = MatX(problem.weights.rate_weights.asDiagonal());
  lin.grad_x = wj.transpose() * err;
  lin.grad_u = problem.weights.rate_weights.asDiagonal() * u_rate.rotor_accels;
  return lin;
}

std::vector<StageLinearization> linearize_horizon(
    const OcpProblem& problem, const std::vector<ExtendedState>& states,
    const std::vector<ControlRate>& controls, bool parallel) {
  const int n_stages = problem.horizon_steps + 1;
  if (static_cast<int>(states.size()) != n_stages ||
      static_cast<int>(controls.size()) != problem.horizon_steps)
    throw ModelError("linearize_horizon: trajectory dimension mismatch");
  std::vector<StageLinearization> out(n_stages);
  const ControlRate zero_rate{VecX::Zero(problem.gtmr.n_rotors)};

#ifdef GTMR_HAVE_OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (int k = 0; k < n_stages; ++k) {
    const ControlRate& u =
        (k < problem.horizon_steps) ? controls[k] : zero_rate;
    out[k] = linearize_stage(states[k], u, k, problem);
  }
  return out;
}

}  // namespace gtmr
