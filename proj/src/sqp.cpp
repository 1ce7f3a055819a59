#include "gtmr/sqp.hpp"

#include <cmath>
#include <optional>
#include <sstream>

namespace gtmr {

namespace {

// Weighted output rows with nonzero weight (position rows drop out under the
// default weights, but the general form is kept).
int count_weighted_rows(const VecX& w) {
  int c = 0;
  for (int i = 0; i < w.size(); ++i)
    if (w(i) > 0) ++c;
  return c;
}

double l1_infeasibility(const OcpProblem& problem,
                        const std::vector<ExtendedState>& states,
                        const std::vector<ControlRate>& controls,
                        const MatX& slacks) {
  const int n_stages = problem.horizon_steps + 1;
  double total =
      (problem.initial_state.to_vector() - states[0].to_vector())
          .cwiseAbs()
          .sum();
  const ControlRate zero_rate{VecX::Zero(problem.gtmr.n_rotors)};
  for (int k = 0; k < n_stages; ++k) {
    const ControlRate& u = k < problem.horizon_steps ? controls[k] : zero_rate;
    if (k < problem.horizon_steps) {
      const ExtendedState pred = rk4_step(states[k], controls[k], problem.step,
                                          problem.gtmr, problem.alloc);
      total += (pred.to_vector() - states[k + 1].to_vector()).cwiseAbs().sum();
    }
    const ConstraintResiduals res = constraint_residuals(
        states[k], u, slacks.col(k), problem.stages[k], problem);
    auto add_neg = [&](const VecX& v) {
      total += (-v.array()).max(0.0).sum();
    };
    add_neg(res.speed_lower);
    add_neg(res.speed_upper);
    if (k < problem.horizon_steps) {
      add_neg(res.accel_lower);
      add_neg(res.accel_upper);
    }
    total += std::max(0.0, -res.range_lower) + std::max(0.0, -res.range_upper);
    total += std::max(0.0, -res.cone);
    add_neg(res.obstacle);
    add_neg(res.slack_nonneg);
  }
  return total;
}

double merit_function(const OcpProblem& problem,
                      const std::vector<ExtendedState>& states,
                      const std::vector<ControlRate>& controls,
                      const MatX& slacks, double penalty) {
  const int n_stages = problem.horizon_steps + 1;
  const ControlRate zero_rate{VecX::Zero(problem.gtmr.n_rotors)};
  double cost = 0;
  for (int k = 0; k < n_stages; ++k) {
    const ControlRate& u = k < problem.horizon_steps ? controls[k] : zero_rate;
    const OutputVector y = output_map(states[k], problem.stages[k],
                                      problem.gtmr, problem.alloc,
                                      problem.optics);
    cost += stage_cost(y, problem.stages[k], u,
                       slacks.col(k).cwiseMax(0.0), problem.weights);
  }
  return cost + penalty * l1_infeasibility(problem, states, controls, slacks);
}

// Penalty coefficients of the range/cone relaxation variables. The linear
// term must exceed any attainable constraint multiplier so the relaxation
// stays exact; the quadratic term only conditions the factorization.
constexpr double kSoftPenalty = 1e5;
constexpr double kSoftQuad = 1.0;

}  // namespace

CondensedQp condense(const OcpProblem& problem,
                     const std::vector<StageLinearization>& lin,
                     const std::vector<ExtendedState>& states,
                     const std::vector<ControlRate>& controls,
                     const MatX& slacks) {
  const int horizon = problem.horizon_steps;
  const int nu = problem.gtmr.n_rotors;
  const int nx = 12 + nu;
  const int n_obs = problem.n_obstacles();
  const int n_stages = horizon + 1;
  if (static_cast<int>(lin.size()) != n_stages ||
      static_cast<int>(states.size()) != n_stages ||
      static_cast<int>(controls.size()) != horizon ||
      slacks.rows() != n_obs || slacks.cols() != n_stages)
    throw ModelError("condense: dimension mismatch");

  CondensedQp c;
  c.nx = nx;
  c.nu = nu;
  c.n_obs = n_obs;
  c.horizon = horizon;
  const int n_rate = horizon * nu;
  // L1 exact-penalty relaxation of the range/cone rows: these hard
  // constraints can be linearly infeasible against the acceleration bounds
  // (e.g. an unreachable range window), and the controller must degrade
  // gracefully instead of failing. The linear penalty dominates any
  // attainable multiplier, so the relaxation is exactly zero whenever the
  // rows are satisfiable.
  const int n_soft = 3 * horizon;
  const int n_vars = n_rate + n_stages * n_obs + n_soft;
  const int soft0 = n_rate + n_stages * n_obs;

  // Forward propagation of the linearized dynamics.
  c.prop = MatX::Zero(n_stages * nx, n_rate);
  c.free_response = VecX::Zero(n_stages * nx);
  c.free_response.head(nx) =
      problem.initial_state.to_vector() - states[0].to_vector();
  for (int k = 0; k < horizon; ++k) {
    auto prop_k = c.prop.middleRows(k * nx, nx);
    auto prop_next = c.prop.middleRows((k + 1) * nx, nx);
    prop_next.leftCols(k * nu).noalias() = lin[k].a * prop_k.leftCols(k * nu);
    prop_next.middleCols(k * nu, nu) = lin[k].b;
    c.free_response.segment((k + 1) * nx, nx) =
        lin[k].a * c.free_response.segment(k * nx, nx) +
        (lin[k].x_next.to_vector() - states[k + 1].to_vector());
  }

  // Gauss-Newton Hessian and gradient through a stacked weighted-row matrix.
  const VecX& w_out = problem.weights.output_weights;
  const int rows_per_stage = count_weighted_rows(w_out);
  MatX stacked = MatX::Zero(n_stages * rows_per_stage, n_rate);
  VecX stacked_err(n_stages * rows_per_stage);
  for (int k = 0; k < n_stages; ++k) {
    const auto prop_k = c.prop.middleRows(k * nx, nx);
    const VecX err0 =
        lin[k].y.to_vector() - problem.stages[k].reference.to_vector() +
        lin[k].out_jac_x * c.free_response.segment(k * nx, nx);
    int rr = 0;
    for (int i = 0; i < w_out.size(); ++i) {
      if (w_out(i) <= 0) continue;
      const double sw = std::sqrt(w_out(i));
      // prop_k is zero beyond column k*nu (controls cannot act backward).
      const int ncols = std::min(k * nu, n_rate);
      stacked.row(k * rows_per_stage + rr).head(ncols).noalias() =
          sw * (lin[k].out_jac_x.row(i) * prop_k.leftCols(ncols));
      stacked_err(k * rows_per_stage + rr) = sw * err0(i);
      ++rr;
    }
  }

  QpProblem& qp = c.qp;
  qp.hessian = MatX::Zero(n_vars, n_vars);
  // Stage-k rows only touch the first k*nu columns, so the rank update runs
  // on the leading block instead of the full rate width.
  for (int k = 1; k < n_stages; ++k) {
    const int ncols = std::min(k * nu, n_rate);
    qp.hessian.topLeftCorner(ncols, ncols)
        .selfadjointView<Eigen::Lower>()
        .rankUpdate(stacked.middleRows(k * rows_per_stage, rows_per_stage)
                        .leftCols(ncols)
                        .transpose());
  }
  qp.hessian.topLeftCorner(n_rate, n_rate) =
      qp.hessian.topLeftCorner(n_rate, n_rate)
          .selfadjointView<Eigen::Lower>();
  qp.gradient = VecX::Zero(n_vars);
  qp.gradient.head(n_rate).noalias() = stacked.transpose() * stacked_err;
  for (int k = 0; k < horizon; ++k) {
    qp.hessian.block(k * nu, k * nu, nu, nu).diagonal() +=
        problem.weights.rate_weights;
    qp.gradient.segment(k * nu, nu) +=
        problem.weights.rate_weights.cwiseProduct(controls[k].rotor_accels);
  }
  for (int k = 0; k < n_stages; ++k)
    for (int j = 0; j < n_obs; ++j) {
      const int v = c.slack_var(k, j);
      qp.hessian(v, v) += problem.weights.slack_weights(j);
      qp.gradient(v) += problem.weights.slack_weights(j) * slacks(j, k);
    }
  for (int i = 0; i < n_soft; ++i) {
    qp.hessian(soft0 + i, soft0 + i) = kSoftQuad;
    qp.gradient(soft0 + i) = kSoftPenalty;
  }

  // Variable bounds: rate boxes and slack nonnegativity.
  qp.var_lower = VecX::Constant(n_vars, -kInf);
  qp.var_upper = VecX::Constant(n_vars, kInf);
  for (int k = 0; k < horizon; ++k) {
    qp.var_lower.segment(k * nu, nu) =
        problem.gtmr.accel_min - controls[k].rotor_accels.array();
    qp.var_upper.segment(k * nu, nu) =
        problem.gtmr.accel_max - controls[k].rotor_accels.array();
  }
  for (int k = 0; k < n_stages; ++k)
    for (int j = 0; j < n_obs; ++j)
      qp.var_lower(c.slack_var(k, j)) = -slacks(j, k);
  qp.var_lower.segment(soft0, n_soft).setZero();

  // Dense path-constraint rows: rotor-speed boxes (two-sided) and
  // range/cone rows for stages 1..N, obstacle rows for all stages.
  const int n_speed = horizon * nu;
  const int n_link = 3 * horizon;
  const int n_obs_rows = n_stages * n_obs;
  const int m_rows = n_speed + n_link + n_obs_rows;
  qp.ineq_matrix = MatX::Zero(m_rows, n_vars);
  qp.ineq_lower = VecX::Constant(m_rows, -kInf);
  qp.ineq_upper = VecX::Constant(m_rows, kInf);
  int row = 0;
  for (int k = 1; k <= horizon; ++k) {
    const auto prop_k = c.prop.middleRows(k * nx, nx);
    const auto free_k = c.free_response.segment(k * nx, nx);
    for (int i = 0; i < nu; ++i) {
      qp.ineq_matrix.row(row).head(n_rate) = prop_k.row(12 + i);
      const double base = states[k].rotor_speeds(i) + free_k(12 + i);
      qp.ineq_lower(row) = problem.gtmr.speed_min - base;
      qp.ineq_upper(row) = problem.gtmr.speed_max - base;
      ++row;
    }
  }
  for (int k = 1; k <= horizon; ++k) {
    const auto prop_k = c.prop.middleRows(k * nx, nx);
    const auto free_k = c.free_response.segment(k * nx, nx);
    const int ncols = std::min(k * nu, n_rate);
    for (int cidx = 0; cidx < 3; ++cidx) {
      qp.ineq_matrix.row(row).head(ncols).noalias() =
          lin[k].con_jac_x.row(cidx) * prop_k.leftCols(ncols);
      qp.ineq_matrix(row, c.soft_var(k, cidx)) = 1.0;
      qp.ineq_lower(row) =
          -(lin[k].con_val(cidx) + lin[k].con_jac_x.row(cidx).dot(free_k));
      ++row;
    }
  }
  for (int k = 0; k < n_stages; ++k) {
    const auto prop_k = c.prop.middleRows(k * nx, nx);
    const auto free_k = c.free_response.segment(k * nx, nx);
    const int ncols = std::min(k * nu, n_rate);
    for (int j = 0; j < n_obs; ++j) {
      qp.ineq_matrix.row(row).head(ncols).noalias() =
          lin[k].con_jac_x.row(3 + j) * prop_k.leftCols(ncols);
      qp.ineq_matrix(row, c.slack_var(k, j)) = 1.0;
      qp.ineq_lower(row) = -(lin[k].con_val(3 + j) + slacks(j, k) +
                             lin[k].con_jac_x.row(3 + j).dot(free_k));
      ++row;
    }
  }
  return c;
}

namespace {

// Moves a one-sided active-set index one stage earlier so the hint still
// points at the same physical constraint after the horizon shifts. Entries
// belonging to the first stage of their block drop out (their successor is
// re-detected by the QP in a few iterations).
std::vector<int> shift_active_set(const std::vector<int>& active, int horizon,
                                  int nu, int n_obs) {
  const int n_rate = horizon * nu;
  const int n_slack = (horizon + 1) * n_obs;
  const int n_soft = 3 * horizon;
  const int n = n_rate + n_slack + n_soft;
  const int m = n_rate + 3 * horizon + n_slack;

  auto shift_row = [&](int r) -> int {
    if (r < n_rate) return r < nu ? -1 : r - nu;  // speed rows, stages 1..N
    int rel = r - n_rate;
    if (rel < 3 * horizon) return rel < 3 ? -1 : r - 3;  // link rows
    rel -= 3 * horizon;
    return rel < n_obs ? -1 : r - n_obs;  // obstacle rows, stages 0..N
  };
  auto shift_var = [&](int v) -> int {
    if (v < n_rate) return v < nu ? -1 : v - nu;
    int rel = v - n_rate;
    if (rel < n_slack) return rel < n_obs ? -1 : v - n_obs;
    rel -= n_slack;
    return rel < 3 ? -1 : v - 3;
  };

  std::vector<int> out;
  out.reserve(active.size());
  for (int i : active) {
    if (i < 0 || i >= 2 * m + 2 * n) continue;
    int shifted;
    if (i < m) {
      shifted = shift_row(i);
    } else if (i < 2 * m) {
      const int r = shift_row(i - m);
      shifted = r < 0 ? -1 : m + r;
    } else if (i < 2 * m + n) {
      const int v = shift_var(i - 2 * m);
      shifted = v < 0 ? -1 : 2 * m + v;
    } else {
      const int v = shift_var(i - 2 * m - n);
      shifted = v < 0 ? -1 : 2 * m + n + v;
    }
    if (shifted >= 0) out.push_back(shifted);
  }
  return out;
}

}  // namespace

OcpSolution shift_warm_start(const OcpSolution& prev,
                             const ExtendedState& new_initial) {
  OcpSolution out = prev;
  const int n_stages = static_cast<int>(prev.states.size());
  for (int k = 0; k + 1 < n_stages; ++k) out.states[k] = prev.states[k + 1];
  for (size_t k = 0; k + 1 < prev.controls.size(); ++k)
    out.controls[k] = prev.controls[k + 1];
  for (int k = 0; k + 1 < prev.slacks.cols(); ++k)
    out.slacks.col(k) = prev.slacks.col(k + 1);
  out.states[0] = new_initial;
  if (!prev.qp_active_set.empty() && !prev.controls.empty())
    out.qp_active_set = shift_active_set(
        prev.qp_active_set, static_cast<int>(prev.controls.size()),
        static_cast<int>(prev.controls[0].rotor_accels.size()),
        static_cast<int>(prev.slacks.rows()));
  return out;
}

OcpSolution cold_start_guess(const OcpProblem& problem,
                             const ExtendedState& initial) {
  OcpSolution sol;
  sol.states.assign(problem.horizon_steps + 1, initial);
  sol.controls.assign(problem.horizon_steps,
                      ControlRate{VecX::Zero(problem.gtmr.n_rotors)});
  sol.slacks = MatX::Zero(problem.n_obstacles(), problem.horizon_steps + 1);
  return sol;
}

OcpSolution rti_step(const OcpProblem& problem, const OcpSolution& warm,
                     const SolverConfig& config, bool parallel_linearize) {
  config.validate();
  const int horizon = problem.horizon_steps;
  const int nu = problem.gtmr.n_rotors;
  const int nx = 12 + nu;
  const int n_obs = problem.n_obstacles();
  if (static_cast<int>(warm.states.size()) != horizon + 1 ||
      static_cast<int>(warm.controls.size()) != horizon ||
      warm.slacks.rows() != n_obs || warm.slacks.cols() != horizon + 1)
    throw ModelError("rti_step: warm solution dimension mismatch");

  OcpSolution sol = warm;
  sol.sqp_iterations = 0;
  sol.qp_iterations = 0;
  sol.status = OcpSolution::Status::converged;

  for (int it = 0; it < config.max_sqp_iters; ++it) {
    std::vector<StageLinearization> lin;
    try {
      lin = linearize_horizon(problem, sol.states, sol.controls,
                              parallel_linearize);
    } catch (const ModelError& e) {
      throw ModelError(std::string("rti_step: linearization failed: ") +
                       e.what());
    }
    CondensedQp cqp = condense(problem, lin, sol.states, sol.controls,
                               sol.slacks);
    const QpSolution qsol =
        solve_qp(cqp.qp, config,
                 sol.qp_active_set.empty() ? nullptr : &sol.qp_active_set);
    sol.qp_iterations += qsol.iterations;
    sol.sqp_iterations = it + 1;
    if (qsol.status == QpStatus::infeasible) {
      sol.status = OcpSolution::Status::infeasible_qp;
      return sol;
    }
    if (qsol.status == QpStatus::max_iter) {
      sol.status = OcpSolution::Status::max_iter;
      return sol;
    }
    sol.qp_active_set = qsol.active_set;

    // Nonlinear KKT residual at the pre-step iterate: stationarity via
    // H*dz (equal to -(g + A'lambda + nu) at the QP optimum), dynamic
    // defects, and primal constraint violation.
    // The soft entries of the step are absolute relaxation levels, not
    // increments, so they stay nonzero at a penalized stationary point and
    // are excluded from the stationarity norm.
    const int n_step_vars = cqp.qp.n() - 3 * horizon;
    double kkt = (cqp.qp.hessian * qsol.primal)
                     .head(n_step_vars)
                     .cwiseAbs()
                     .maxCoeff();
    for (int k = 0; k < horizon; ++k)
      kkt = std::max(kkt, (lin[k].x_next.to_vector() -
                           sol.states[k + 1].to_vector())
                              .cwiseAbs()
                              .maxCoeff());
    kkt = std::max(kkt, (problem.initial_state.to_vector() -
                         sol.states[0].to_vector())
                            .cwiseAbs()
                            .maxCoeff());
    // Constraint violation net of the relaxation: softs and slacks absorb
    // link/obstacle infeasibility by design, so only the excess the QP could
    // not cover counts against stationarity.
    for (int k = 1; k <= horizon; ++k)
      for (int cidx = 0; cidx < 3; ++cidx)
        kkt = std::max(kkt, -lin[k].con_val(cidx) -
                                qsol.primal(cqp.soft_var(k, cidx)));
    for (int k = 0; k <= horizon; ++k)
      for (int j = 0; j < n_obs; ++j) {
        const double s_new = std::max(
            0.0, sol.slacks(j, k) + qsol.primal(cqp.slack_var(k, j)));
        kkt = std::max(kkt, -lin[k].con_val(3 + j) - s_new);
      }
    sol.kkt_residual = kkt;

    // Expand the step and apply it (full step in RTI mode, merit line
    // search on cold starts).
    const VecX& dz = qsol.primal;
    const int n_rate = cqp.n_rate_vars();
    auto apply = [&](double alpha) {
      OcpSolution next = sol;
      for (int k = 0; k <= horizon; ++k) {
        const VecX dx =
            cqp.free_response.segment(k * nx, nx) +
            cqp.prop.middleRows(k * nx, nx) * dz.head(n_rate);
        next.states[k] = ExtendedState::from_vector(
            sol.states[k].to_vector() + alpha * dx, nu);
      }
      for (int k = 0; k < horizon; ++k)
        next.controls[k].rotor_accels =
            sol.controls[k].rotor_accels + alpha * dz.segment(k * nu, nu);
      for (int k = 0; k <= horizon; ++k)
        for (int j = 0; j < n_obs; ++j)
          next.slacks(j, k) =
              std::max(0.0, sol.slacks(j, k) + alpha * dz(cqp.slack_var(k, j)));
      return next;
    };

    if (config.max_sqp_iters == 1) {
      sol = apply(1.0);
    } else {
      constexpr double kMeritPenalty = 1e6;
      const double merit0 = merit_function(problem, sol.states, sol.controls,
                                           sol.slacks, kMeritPenalty);
      double alpha = 1.0;
      OcpSolution best = apply(alpha);
      for (int ls = 0; ls < 10; ++ls) {
        try {
          if (merit_function(problem, best.states, best.controls, best.slacks,
                             kMeritPenalty) < merit0)
            break;
        } catch (const ModelError&) {
          // Trial point left the model's admissible set; halve the step.
        }
        alpha *= 0.5;
        best = apply(alpha);
      }
      sol = best;
    }

    if (kkt < config.kkt_tol) break;
  }
  (void)nx;
  return sol;
}

}  // namespace gtmr
