#pragma once

#include <limits>
#include <vector>

#include "gtmr/types.hpp"

namespace gtmr {

/// Dense inequality-constrained QP:
///   min 1/2 x'Hx + g'x
///   s.t. ineq_lower <= A x <= ineq_upper,  var_lower <= x <= var_upper.
/// Infinite bounds mark absent sides.
struct QpProblem {
  MatX hessian;       // n x n, symmetric
  VecX gradient;      // n
  MatX ineq_matrix;   // m x n
  VecX ineq_lower, ineq_upper;  // m
  VecX var_lower, var_upper;    // n

  int n() const { return static_cast<int>(gradient.size()); }
  int m() const { return static_cast<int>(ineq_lower.size()); }
  void validate() const;
};

enum class QpStatus { converged, max_iter, infeasible };

struct SolverConfig {
  int max_sqp_iters = 1;       // 1 = real-time iteration
  int max_qp_iters = 200;
  double kkt_tol = 1e-6;
  double active_set_tol = 1e-9;
  double levenberg_damping = 1e-8;

  void validate() const;
};

/// Indices identify one-sided constraints: 0..m-1 lower rows, m..2m-1 upper
/// rows, then lower and upper variable bounds.
struct QpSolution {
  VecX primal;
  VecX dual;  // multiplier per one-sided constraint, >= 0, nonzero on actives
  std::vector<int> active_set;
  int iterations = 0;
  QpStatus status = QpStatus::converged;
  // One-sided index of the constraint being activated when infeasibility
  // was detected; -1 otherwise.
  int blocking_constraint = -1;
};

/// Dual active-set method (Goldfarb-Idnani) on the damped Hessian. The warm
/// hint biases the order in which violated constraints are activated.
QpSolution solve_qp(const QpProblem& qp, const SolverConfig& config,
                    const std::vector<int>* warm_active_set = nullptr);

/// Infinity-norm KKT residual (stationarity, feasibility, complementarity)
/// of a candidate solution; the acceptance property suite's oracle.
double qp_kkt_residual(const QpProblem& qp, const QpSolution& sol);

/// Writes the QP in a plain-text row-major format (header with dimensions,
/// then each block) for offline debugging.
void dump_qp(const QpProblem& qp, const std::string& path);
QpProblem read_qp_dump(const std::string& path);

inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace gtmr
