#include <doctest.h>

#include <random>

#include "gtmr/dynamics.hpp"
#include "gtmr/sqp.hpp"

using namespace gtmr;

namespace {

// Hover fixture: receiver directly below the transmitter at the desired
// range, reference equal to the hover output, beam pointing down.
struct HoverFixture {
  OcpProblem problem;
  ExtendedState hover;

  explicit HoverFixture(int horizon, int n_obs = 0) {
    OcpProblem& p = problem;
    p.gtmr = GtmrParams::tilted_hexa();
    p.alloc = build_allocation(p.gtmr);
    p.optics.tx_rotation_body = rotation_matrix(Vec3(M_PI, 0, 0));
    p.weights = OcpWeights::defaults(p.gtmr.n_rotors, n_obs);
    p.horizon_steps = horizon;
    p.step = 0.015;

    hover.body.position = Vec3(0, 0, 1.0);
    hover.rotor_speeds =
        VecX::Constant(p.gtmr.n_rotors, hover_speed(p.gtmr));
    p.initial_state = hover;

    StageData sd;
    sd.rx_pos = transmitter_position(hover, p.optics) -
                Vec3(0, 0, p.optics.desired_range);
    sd.rx_vel = Vec3::Zero();
    sd.reference = output_map(hover, sd, p.gtmr, p.alloc, p.optics);
    for (int j = 0; j < n_obs; ++j) {
      sd.obstacle_centers.push_back(Vec3(4 + j, 4, 1));
      sd.obstacle_radii.push_back(0.25);
    }
    p.stages.assign(horizon + 1, sd);
  }
};

}  // namespace

TEST_CASE("hover is a stationary point of the OCP") {
  HoverFixture f(10, 2);
  SolverConfig cfg;
  const OcpSolution warm = cold_start_guess(f.problem, f.hover);
  const OcpSolution sol = rti_step(f.problem, warm, cfg);
  CHECK(sol.status == OcpSolution::Status::converged);
  CHECK(sol.kkt_residual < 1e-8);
  for (const auto& u : sol.controls)
    CHECK(u.rotor_accels.cwiseAbs().maxCoeff() < 1e-7);
  for (const auto& x : sol.states)
    CHECK((x.body.position - f.hover.body.position).norm() < 1e-7);
  CHECK(sol.slacks.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("condensing with N = 1 matches the hand elimination") {
  HoverFixture f(1);
  OcpProblem& p = f.problem;
  // A mildly perturbed linearization point so nothing is trivially zero.
  std::vector<ExtendedState> states(2, f.hover);
  states[1].body.position += Vec3(0.01, -0.02, 0.005);
  std::vector<ControlRate> controls{ControlRate{VecX::Constant(6, 3.0)}};
  const MatX slacks = MatX::Zero(0, 2);

  const auto lin = linearize_horizon(p, states, controls, false);
  const CondensedQp c = condense(p, lin, states, controls, slacks);

  const int nx = 18, nu = 6;
  // Stage 0 cannot be influenced; stage 1 sees B_0.
  CHECK(c.prop.topRows(nx).cwiseAbs().maxCoeff() == 0.0);
  CHECK((c.prop.bottomRows(nx) - lin[0].b).cwiseAbs().maxCoeff() == 0.0);
  // Free response: initial mismatch propagated through A_0 plus the defect.
  const VecX r0 = p.initial_state.to_vector() - states[0].to_vector();
  CHECK((c.free_response.head(nx) - r0).cwiseAbs().maxCoeff() < 1e-14);
  const VecX expect1 =
      lin[0].a * r0 + (lin[0].x_next.to_vector() - states[1].to_vector());
  CHECK((c.free_response.tail(nx) - expect1).cwiseAbs().maxCoeff() < 1e-12);

  // Hessian in the rate block: B' H_1 B + R.
  const MatX expected =
      lin[0].b.transpose() * lin[1].hess_xx * lin[0].b +
      MatX(p.weights.rate_weights.asDiagonal());
  CHECK((c.qp.hessian.topLeftCorner(nu, nu) - expected).cwiseAbs().maxCoeff() <
        1e-9);
  // Gradient: B' (H_1 f_1 + g_1) + R u_0 (stage-0 terms have zero prop).
  const VecX expected_g =
      lin[0].b.transpose() * (lin[1].hess_xx * expect1 + lin[1].grad_x) +
      p.weights.rate_weights.cwiseProduct(controls[0].rotor_accels);
  CHECK((c.qp.gradient.head(nu) - expected_g).cwiseAbs().maxCoeff() < 1e-9);

  // Rate variable bounds shift by the current control.
  CHECK(c.qp.var_lower(0) ==
        doctest::Approx(p.gtmr.accel_min - 3.0));
  CHECK(c.qp.var_upper(0) ==
        doctest::Approx(p.gtmr.accel_max - 3.0));
}

TEST_CASE("condensed solution solves the sparse multiple-shooting KKT system") {
  // Constraints are deliberately made inactive so the equality-constrained
  // sparse KKT system is the exact optimality condition.
  HoverFixture f(3);
  OcpProblem& p = f.problem;
  p.gtmr.accel_min = -1e7;
  p.gtmr.accel_max = 1e7;
  p.gtmr.speed_min = 1e-3;
  p.gtmr.speed_max = 1e4;
  p.optics.range_min = 1e-3;
  p.optics.range_max = 1e3;
  p.optics.cone_cos_threshold = 1e-6;

  const int horizon = 3, nx = 18, nu = 6;
  std::mt19937 rng(73);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<ExtendedState> states(horizon + 1, f.hover);
  std::vector<ControlRate> controls(horizon, ControlRate{VecX::Zero(nu)});
  for (int k = 0; k <= horizon; ++k) {
    states[k].body.position += 0.02 * Vec3(u(rng), u(rng), u(rng));
    states[k].body.velocity += 0.05 * Vec3(u(rng), u(rng), u(rng));
  }
  for (int k = 0; k < horizon; ++k)
    controls[k].rotor_accels =
        VecX::NullaryExpr(nu, [&](Eigen::Index) { return 5.0 * u(rng); });

  const auto lin = linearize_horizon(p, states, controls, false);
  const MatX slacks = MatX::Zero(0, horizon + 1);
  const CondensedQp c = condense(p, lin, states, controls, slacks);
  SolverConfig cfg;
  cfg.max_qp_iters = 400;
  // The sparse reference system below carries no regularization, so shrink
  // the solver's damping to keep the comparison tight.
  cfg.levenberg_damping = 1e-14;
  const QpSolution qsol = solve_qp(c.qp, cfg);
  REQUIRE(qsol.status == QpStatus::converged);

  // Sparse KKT: variables (dx_0..dx_3, du_0..du_2), equality multipliers for
  // dx_0 = r_0 and the three shooting defects.
  const int nv = (horizon + 1) * nx + horizon * nu;
  const int ne = (horizon + 1) * nx;
  MatX kkt = MatX::Zero(nv + ne, nv + ne);
  VecX rhs = VecX::Zero(nv + ne);
  auto xi = [&](int k) { return k * nx; };
  auto ui = [&](int k) { return (horizon + 1) * nx + k * nu; };
  for (int k = 0; k <= horizon; ++k) {
    kkt.block(xi(k), xi(k), nx, nx) = lin[k].hess_xx;
    rhs.segment(xi(k), nx) = -lin[k].grad_x;
  }
  for (int k = 0; k < horizon; ++k) {
    kkt.block(ui(k), ui(k), nu, nu) = lin[k].hess_uu;
    rhs.segment(ui(k), nu) = -lin[k].grad_u;
  }
  MatX eq = MatX::Zero(ne, nv);
  VecX eq_rhs = VecX::Zero(ne);
  eq.block(0, xi(0), nx, nx) = MatX::Identity(nx, nx);
  eq_rhs.head(nx) = p.initial_state.to_vector() - states[0].to_vector();
  for (int k = 0; k < horizon; ++k) {
    eq.block((k + 1) * nx, xi(k), nx, nx) = lin[k].a;
    eq.block((k + 1) * nx, ui(k), nx, nu) = lin[k].b;
    eq.block((k + 1) * nx, xi(k + 1), nx, nx) = -MatX::Identity(nx, nx);
    eq_rhs.segment((k + 1) * nx, nx) =
        states[k + 1].to_vector() - lin[k].x_next.to_vector();
  }
  kkt.block(nv, 0, ne, nv) = eq;
  kkt.block(0, nv, nv, ne) = eq.transpose();
  rhs.tail(ne) = eq_rhs;
  const VecX z = kkt.fullPivLu().solve(rhs);

  for (int k = 0; k < horizon; ++k) {
    const VecX du_sparse = z.segment(ui(k), nu);
    const VecX du_cond = qsol.primal.segment(k * nu, nu);
    CHECK((du_sparse - du_cond).cwiseAbs().maxCoeff() < 1e-8);
  }
  for (int k = 0; k <= horizon; ++k) {
    const VecX dx_cond =
        c.free_response.segment(k * nx, nx) +
        c.prop.middleRows(k * nx, nx) * qsol.primal.head(horizon * nu);
    CHECK((z.segment(xi(k), nx) - dx_cond).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("warm-start shift moves every stage forward by one") {
  OcpSolution sol;
  const int n = 4;
  for (int k = 0; k <= n; ++k) {
    ExtendedState x;
    x.body.position = Vec3(k, 0, 0);
    x.rotor_speeds = VecX::Constant(6, 50.0 + k);
    sol.states.push_back(x);
  }
  for (int k = 0; k < n; ++k)
    sol.controls.push_back(ControlRate{VecX::Constant(6, 1.0 * k)});
  sol.slacks = MatX::Zero(2, n + 1);
  sol.slacks.row(0) = VecX::LinSpaced(n + 1, 0.0, 4.0);

  ExtendedState meas;
  meas.body.position = Vec3(0.5, 0, 0);
  meas.rotor_speeds = VecX::Constant(6, 49.0);
  const OcpSolution shifted = shift_warm_start(sol, meas);

  CHECK(shifted.states[0].body.position.x() == doctest::Approx(0.5));
  CHECK(shifted.states[1].body.position.x() == doctest::Approx(2.0));
  // The terminal stage is duplicated.
  CHECK(shifted.states[n].body.position.x() == doctest::Approx(4.0));
  CHECK(shifted.controls[0].rotor_accels(0) == doctest::Approx(1.0));
  CHECK(shifted.controls[n - 1].rotor_accels(0) == doctest::Approx(3.0));
  CHECK(shifted.slacks(0, 0) == doctest::Approx(1.0));
  CHECK(shifted.slacks(0, n) == doctest::Approx(4.0));
}

TEST_CASE("cold start from an out-of-range state restores feasibility") {
  // A 0.75 s horizon gives the rotors enough authority to re-enter the range
  // band within the plan; over much shorter horizons the exact-penalty
  // optimum legitimately leaves part of the violation to the relaxation.
  HoverFixture f(50);
  OcpProblem& p = f.problem;
  // Start 1.6 m from the receiver, outside the 1.4 m upper range bound.
  ExtendedState far = f.hover;
  far.body.position.z() += 0.6;
  p.initial_state = far;

  SolverConfig cfg;
  cfg.max_sqp_iters = 30;
  cfg.max_qp_iters = 500;
  const OcpSolution sol = rti_step(p, cold_start_guess(p, far), cfg);
  REQUIRE(sol.status != OcpSolution::Status::infeasible_qp);

  double worst_range = 0;
  for (int k = 1; k <= p.horizon_steps; ++k) {
    const OutputVector y =
        output_map(sol.states[k], p.stages[k], p.gtmr, p.alloc, p.optics);
    worst_range = std::max(worst_range, y.range);
  }
  // The predicted trajectory re-enters the admissible range band (the first
  // stages are still escaping the initial violation).
  const OutputVector y_end = output_map(sol.states[p.horizon_steps],
                                        p.stages[p.horizon_steps], p.gtmr,
                                        p.alloc, p.optics);
  CHECK(y_end.range < p.optics.range_max + 1e-3);
  CHECK(y_end.range > p.optics.range_min - 1e-3);
  CHECK(sol.kkt_residual < 1e-2);
}

TEST_CASE("rti steps contract toward a stationary point") {
  HoverFixture f(10);
  OcpProblem& p = f.problem;
  ExtendedState start = f.hover;
  start.body.position += Vec3(0.05, -0.05, 0.02);
  p.initial_state = start;

  SolverConfig cfg;
  OcpSolution sol = cold_start_guess(p, start);
  double prev = 1e100;
  for (int i = 0; i < 5; ++i) {
    sol = rti_step(p, sol, cfg);
    REQUIRE(sol.status == OcpSolution::Status::converged);
  }
  // After several iterations at a fixed problem the KKT residual is small.
  CHECK(sol.kkt_residual < 1e-5);
  (void)prev;
}
