#pragma once

#include <vector>

#include "gtmr/ocp.hpp"
#include "gtmr/qp.hpp"

namespace gtmr {

/// Trajectories, slacks and solver diagnostics of one NMPC solve.
struct OcpSolution {
  std::vector<ExtendedState> states;  // N + 1
  std::vector<ControlRate> controls;  // N
  MatX slacks;                        // n_obstacles x (N + 1)
  double kkt_residual = 0;
  int qp_iterations = 0;
  int sqp_iterations = 0;
  enum class Status { converged, max_iter, infeasible_qp } status =
      Status::converged;
  std::vector<int> qp_active_set;  // carried across solves for warm starting
};

/// Condensed QP in the control-rate and slack deviations, together with the
/// data needed to expand a QP step back to state deviations:
/// dx_k = free_response_k + prop_k * du.
struct CondensedQp {
  QpProblem qp;
  MatX prop;           // (N+1)*nx x N*nu, stage k in rows [k*nx, (k+1)*nx)
  VecX free_response;  // (N+1)*nx
  int nx = 0, nu = 0, n_obs = 0, horizon = 0;

  int n_rate_vars() const { return horizon * nu; }
  int slack_var(int k, int j) const {
    return n_rate_vars() + k * n_obs + j;
  }
  // Relaxation variable of link row cidx in {0,1,2} at stage k >= 1.
  int soft_var(int k, int cidx) const {
    return n_rate_vars() + (horizon + 1) * n_obs + (k - 1) * 3 + cidx;
  }
};

/// Eliminates state deviations through the linearized dynamics, leaving
/// control-rate and slack deviations as QP variables. Hard state constraints
/// enter for stages 1..N; the measured stage 0 is not decidable.
CondensedQp condense(const OcpProblem& problem,
                     const std::vector<StageLinearization>& lin,
                     const std::vector<ExtendedState>& states,
                     const std::vector<ControlRate>& controls,
                     const MatX& slacks);

/// One or more Gauss-Newton iterations (linearize, condense, QP, full-step
/// update). With max_sqp_iters > 1 a halving line search on an l1 merit
/// function guards the cold-start iterations.
OcpSolution rti_step(const OcpProblem& problem, const OcpSolution& warm,
                     const SolverConfig& config, bool parallel_linearize = true);

/// Shifts a solution by one stage, duplicates the terminal stage, and pins
/// stage 0 to the new measured state.
OcpSolution shift_warm_start(const OcpSolution& prev,
                             const ExtendedState& new_initial);

/// Hover-at-rest trajectory used to initialize the first solve.
OcpSolution cold_start_guess(const OcpProblem& problem,
                             const ExtendedState& initial);

}  // namespace gtmr
