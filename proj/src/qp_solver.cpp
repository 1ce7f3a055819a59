#include "gtmr/qp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

namespace gtmr {

void QpProblem::validate() const {
  const int nn = n(), mm = m();
  if (hessian.rows() != nn || hessian.cols() != nn)
    throw ModelError("QpProblem: hessian dimension mismatch");
  for (int j = 0; j < nn; ++j)
    for (int i = j + 1; i < nn; ++i)
      if (std::abs(hessian(i, j) - hessian(j, i)) > 1e-10)
        throw ModelError("QpProblem: hessian not symmetric");
  if (ineq_matrix.rows() != mm || (mm > 0 && ineq_matrix.cols() != nn))
    throw ModelError("QpProblem: inequality matrix dimension mismatch");
  if (ineq_upper.size() != mm || var_lower.size() != nn ||
      var_upper.size() != nn)
    throw ModelError("QpProblem: bound vector dimension mismatch");
  for (int i = 0; i < mm; ++i)
    if (ineq_lower(i) > ineq_upper(i))
      throw ModelError("QpProblem: inconsistent inequality bounds");
  for (int j = 0; j < nn; ++j)
    if (var_lower(j) > var_upper(j))
      throw ModelError("QpProblem: inconsistent variable bounds");
}

void SolverConfig::validate() const {
  if (max_sqp_iters < 1 || max_qp_iters < 1)
    throw ModelError("SolverConfig: iteration limits must be >= 1");
  if (kkt_tol <= 0 || active_set_tol <= 0 || levenberg_damping <= 0)
    throw ModelError("SolverConfig: tolerances must be positive");
}

namespace {

// One-sided view c'x >= rhs over rows and variable bounds. Index layout:
// [0, m): lower rows; [m, 2m): upper rows; [2m, 2m+n): lower bounds;
// [2m+n, 2m+2n): upper bounds.
struct OneSided {
  const QpProblem& qp;
  int m, n;

  explicit OneSided(const QpProblem& p) : qp(p), m(p.m()), n(p.n()) {}
  int count() const { return 2 * m + 2 * n; }

  double rhs(int i) const {
    if (i < m) return qp.ineq_lower(i);
    if (i < 2 * m) return -qp.ineq_upper(i - m);
    if (i < 2 * m + n) return qp.var_lower(i - 2 * m);
    return -qp.var_upper(i - 2 * m - n);
  }

  double value(int i, const VecX& x) const {
    if (i < m) return qp.ineq_matrix.row(i).dot(x);
    if (i < 2 * m) return -qp.ineq_matrix.row(i - m).dot(x);
    if (i < 2 * m + n) return x(i - 2 * m);
    return -x(i - 2 * m - n);
  }

  void normal(int i, VecX& np) const {
    np.setZero();
    if (i < m)
      np = qp.ineq_matrix.row(i).transpose();
    else if (i < 2 * m)
      np = -qp.ineq_matrix.row(i - m).transpose();
    else if (i < 2 * m + n)
      np(i - 2 * m) = 1.0;
    else
      np(i - 2 * m - n) = -1.0;
  }
};

double givens_hypot(double a, double b) { return std::hypot(a, b); }

// First index of the trailing block of variables whose Hessian rows are
// purely diagonal (slack/penalty variables in the condensed NMPC QP).
int trailing_diagonal_start(const MatX& h) {
  const int n = static_cast<int>(h.rows());
  int start = n;
  while (start > 0) {
    const int i = start - 1;
    bool diag_only = true;
    for (int j = 0; j < n; ++j)
      if (j != i && h(i, j) != 0.0) {
        diag_only = false;
        break;
      }
    if (!diag_only) break;
    --start;
  }
  return start;
}

// Reduces d[q..n-1] to a single entry d[q] by Givens rotations, carrying the
// same rotations into the columns of J, then appends d as column q of R.
// Returns false if the new constraint normal is linearly dependent on the
// active set.
bool add_to_factorization(MatX& r_fac, MatX& j_fac, VecX& d, int& q,
                          double& r_norm) {
  const int n = static_cast<int>(d.size());
  for (int j = n - 1; j >= q + 1; --j) {
    double cc = d(j - 1);
    double ss = d(j);
    const double h = givens_hypot(cc, ss);
    if (h < std::numeric_limits<double>::epsilon()) continue;
    d(j) = 0.0;
    ss /= h;
    cc /= h;
    if (cc < 0) {
      cc = -cc;
      ss = -ss;
      d(j - 1) = -h;
    } else {
      d(j - 1) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = 0; k < n; ++k) {
      const double t1 = j_fac(k, j - 1);
      const double t2 = j_fac(k, j);
      j_fac(k, j - 1) = t1 * cc + t2 * ss;
      j_fac(k, j) = xny * (t1 + j_fac(k, j - 1)) - t2;
    }
  }
  ++q;
  r_fac.col(q - 1).head(q) = d.head(q);
  if (std::abs(d(q - 1)) <= std::numeric_limits<double>::epsilon() * r_norm)
    return false;
  r_norm = std::max(r_norm, std::abs(d(q - 1)));
  return true;
}

// Removes active-set position pos, restoring the triangularity of R.
void delete_from_factorization(MatX& r_fac, MatX& j_fac, std::vector<int>& act,
                               VecX& u, int pos, int& q) {
  const int n = static_cast<int>(j_fac.rows());
  for (int i = pos; i < q - 1; ++i) {
    act[i] = act[i + 1];
    u(i) = u(i + 1);
    r_fac.col(i).head(q) = r_fac.col(i + 1).head(q);
  }
  act.pop_back();
  // The candidate constraint's accumulated multiplier lives at u(q) and
  // must follow the shift, or the final dual comes out too small.
  u(q - 1) = u(q);
  u(q) = 0.0;
  r_fac.col(q - 1).setZero();
  --q;
  for (int j = pos; j < q; ++j) {
    double cc = r_fac(j, j);
    double ss = r_fac(j + 1, j);
    const double h = givens_hypot(cc, ss);
    if (h < std::numeric_limits<double>::epsilon()) continue;
    cc /= h;
    ss /= h;
    r_fac(j + 1, j) = 0.0;
    if (cc < 0) {
      r_fac(j, j) = -h;
      cc = -cc;
      ss = -ss;
    } else {
      r_fac(j, j) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = j + 1; k < q; ++k) {
      const double t1 = r_fac(j, k);
      const double t2 = r_fac(j + 1, k);
      r_fac(j, k) = t1 * cc + t2 * ss;
      r_fac(j + 1, k) = xny * (t1 + r_fac(j, k)) - t2;
    }
    for (int k = 0; k < n; ++k) {
      const double t1 = j_fac(k, j);
      const double t2 = j_fac(k, j + 1);
      j_fac(k, j) = t1 * cc + t2 * ss;
      j_fac(k, j + 1) = xny * (j_fac(k, j) + t1) - t2;
    }
  }
}

QpSolution solve_qp_core(const QpProblem& qp, const SolverConfig& config,
                         const std::vector<int>* warm_active_set,
                         bool validated = false) {
  if (!validated) qp.validate();
  config.validate();
  const int n = qp.n();
  const OneSided cons(qp);
  const int total = cons.count();

  MatX damped = qp.hessian;
  damped.diagonal().array() += config.levenberg_damping;

  // Trailing diagonal-only variables factor independently; the dense
  // Cholesky is restricted to the leading coupled block.
  const int n_dense = trailing_diagonal_start(damped);

  QpSolution sol;
  sol.primal = VecX::Zero(n);
  sol.dual = VecX::Zero(total);

  // J = L^-T; its trailing columns span the null space of the active normals.
  // The expensive triangular inversion is deferred until a constraint
  // actually has to enter the working set.
  MatX j_fac = MatX::Zero(n, n);
  Eigen::LLT<MatX> llt;
  if (n_dense > 0) {
    llt.compute(damped.topLeftCorner(n_dense, n_dense));
    if (llt.info() != Eigen::Success)
      throw ModelError("solve_qp: hessian not positive definite after damping");
    sol.primal.head(n_dense) = -llt.solve(qp.gradient.head(n_dense));
  }
  for (int i = n_dense; i < n; ++i) {
    const double h = damped(i, i);
    if (h <= 0)
      throw ModelError("solve_qp: hessian not positive definite after damping");
    sol.primal[i] = -qp.gradient[i] / h;
  }
  bool j_built = false;
  auto ensure_j = [&] {
    if (j_built) return;
    if (n_dense > 0) {
      auto lead = j_fac.topLeftCorner(n_dense, n_dense);
      lead.setIdentity();
      llt.matrixL().transpose().solveInPlace(lead);
    }
    for (int i = n_dense; i < n; ++i) j_fac(i, i) = 1.0 / std::sqrt(damped(i, i));
    j_built = true;
  };
  MatX r_fac = MatX::Zero(n, n);
  double r_norm = 1.0;

  std::vector<int> active;
  VecX u = VecX::Zero(total);  // dual values by active-set position
  VecX np(n), d(n), z(n), r_dual(n);
  std::vector<char> excluded(total, 0);
  std::vector<char> in_active(total, 0);
  int q = 0;
  int iter = 0;

  // Row values A x are maintained incrementally (ax += t * A z on every
  // primal step); scanning for violated constraints is then O(m + n)
  // instead of m dot products per sweep.
  const int m = qp.m();
  VecX ax = m > 0 ? VecX(qp.ineq_matrix * sol.primal) : VecX();
  VecX az(m);
  auto violation = [&](int i) {
    const double rhs = cons.rhs(i);
    if (!std::isfinite(rhs)) return 0.0;
    double val;
    if (i < m)
      val = ax(i);
    else if (i < 2 * m)
      val = -ax(i - m);
    else if (i < 2 * m + n)
      val = sol.primal(i - 2 * m);
    else
      val = -sol.primal(i - 2 * m - n);
    return val - rhs;
  };

  while (true) {
    if (++iter > config.max_qp_iters) {
      sol.status = QpStatus::max_iter;
      break;
    }
    // Select the most violated inactive constraint; warm-hinted constraints
    // take precedence when violated.
    int ip = -1;
    double worst = -config.active_set_tol;
    if (warm_active_set) {
      for (int i : *warm_active_set) {
        if (i < 0 || i >= total || excluded[i] || in_active[i]) continue;
        const double s = violation(i);
        if (s < worst) {
          worst = s;
          ip = i;
        }
      }
    }
    if (ip < 0) {
      for (int i = 0; i < total; ++i) {
        if (excluded[i] || in_active[i]) continue;
        const double s = violation(i);
        if (s < worst) {
          worst = s;
          ip = i;
        }
      }
    }
    if (ip < 0) {
      sol.status = QpStatus::converged;
      break;
    }
    ensure_j();

    cons.normal(ip, np);
    double s_ip = worst;
    u(q) = 0.0;

    // Inner loop: step toward constraint ip, dropping blocking actives.
    bool added = false;
    while (true) {
      d.noalias() = j_fac.transpose() * np;
      z.setZero();
      if (q < n)
        z.noalias() = j_fac.rightCols(n - q) * d.tail(n - q);
      if (q > 0)
        r_dual.head(q) = r_fac.topLeftCorner(q, q)
                             .triangularView<Eigen::Upper>()
                             .solve(d.head(q));

      double t1 = kInf;
      int blocking = -1;
      for (int k = 0; k < q; ++k) {
        if (r_dual(k) > 0 && u(k) / r_dual(k) < t1) {
          t1 = u(k) / r_dual(k);
          blocking = k;
        }
      }
      double t2 = kInf;
      const double ztnp = z.dot(np);
      if (std::abs(z.dot(z)) > std::numeric_limits<double>::epsilon())
        t2 = -s_ip / ztnp;

      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        sol.status = QpStatus::infeasible;
        sol.blocking_constraint = ip;
        sol.active_set = active;
        sol.iterations = iter;
        return sol;
      }
      if (!std::isfinite(t2)) {
        // Dual-only step: drop the blocking constraint.
        u.head(q) -= t * r_dual.head(q);
        u(q) += t;
        in_active[active[blocking]] = 0;
        delete_from_factorization(r_fac, j_fac, active, u, blocking, q);
        if (++iter > config.max_qp_iters) {
          sol.status = QpStatus::max_iter;
          sol.active_set = active;
          sol.iterations = iter;
          return sol;
        }
        continue;
      }

      sol.primal += t * z;
      if (m > 0) {
        az.noalias() = qp.ineq_matrix * z;
        ax += t * az;
      }
      u.head(q) -= t * r_dual.head(q);
      u(q) += t;

      if (t == t2) {
        active.push_back(ip);
        in_active[ip] = 1;
        if (!add_to_factorization(r_fac, j_fac, d, q, r_norm)) {
          // Linearly dependent normal: back out and exclude it.
          excluded[ip] = 1;
          in_active[ip] = 0;
          delete_from_factorization(r_fac, j_fac, active, u,
                                    static_cast<int>(active.size()) - 1, q);
        }
        added = true;
        break;
      }
      // Partial step: drop the blocking constraint and keep pursuing ip.
      in_active[active[blocking]] = 0;
      delete_from_factorization(r_fac, j_fac, active, u, blocking, q);
      s_ip = violation(ip);
      if (++iter > config.max_qp_iters) {
        sol.status = QpStatus::max_iter;
        sol.active_set = active;
        sol.iterations = iter;
        return sol;
      }
    }
    (void)added;
  }

  for (int k = 0; k < q; ++k) sol.dual(active[k]) = u(k);
  sol.active_set = active;
  sol.iterations = iter;
  return sol;
}

// Warm-start fast path: variable bounds hinted as active are eliminated by
// fixing the variable at its bound, and only the reduced QP is solved with
// the active-set method. The full KKT conditions are verified on expansion;
// any wrong hint (negative multiplier, failed reduced solve) falls back to
// the plain solver, so the result is always a true optimum.
bool try_fixed_variable_start_once(const QpProblem& qp,
                                   const SolverConfig& config,
                                   const std::vector<int>& hints,
                                   QpSolution& out,
                                   std::vector<int>& wrong_vars) {
  const int n = qp.n(), m = qp.m();
  // Only trailing diagonal variables are fixed: their bound activity is
  // stable across warm starts, while coupled-variable bounds (e.g. rotor
  // acceleration limits) churn and are better left to the active-set loop.
  const int fixable_from = trailing_diagonal_start(qp.hessian);
  std::vector<int> side(n, 0);  // +1 fixed at lower, -1 fixed at upper
  std::vector<int> row_hints;
  for (int i : hints) {
    if (i < 0 || i >= 2 * m + 2 * n) continue;
    if (i < 2 * m) {
      row_hints.push_back(i);
      continue;
    }
    const bool lower = i < 2 * m + n;
    const int j = lower ? i - 2 * m : i - 2 * m - n;
    if (j < fixable_from) continue;  // stays a hint for the reduced solve
    const double b = lower ? qp.var_lower(j) : qp.var_upper(j);
    if (!std::isfinite(b)) continue;
    if (side[j] != 0) return false;  // both sides hinted: ambiguous
    side[j] = lower ? 1 : -1;
  }
  int n_fixed = 0;
  for (int j = 0; j < n; ++j) n_fixed += side[j] != 0;
  if (n_fixed == 0 || n_fixed == n) return false;

  std::vector<int> free_idx, fixed_idx;
  std::vector<int> pos(n, -1);
  free_idx.reserve(n - n_fixed);
  for (int j = 0; j < n; ++j) {
    if (side[j] == 0) {
      pos[j] = static_cast<int>(free_idx.size());
      free_idx.push_back(j);
    } else {
      fixed_idx.push_back(j);
    }
  }
  const int nf = static_cast<int>(free_idx.size());

  VecX x_fix(n_fixed);
  for (int k = 0; k < n_fixed; ++k) {
    const int j = fixed_idx[k];
    x_fix(k) = side[j] > 0 ? qp.var_lower(j) : qp.var_upper(j);
  }

  // Every fixed variable lives in the trailing diagonal block, so it has no
  // Hessian coupling to any free variable: the reduced Hessian is the
  // original with fixed rows/columns deleted, the reduced gradient a plain
  // gather, and only the fixed columns of the inequality matrix contribute a
  // right-hand-side shift. Leading columns are untouched block copies.
  QpProblem red;
  red.hessian = MatX::Zero(nf, nf);
  red.hessian.topLeftCorner(fixable_from, fixable_from) =
      qp.hessian.topLeftCorner(fixable_from, fixable_from);
  red.gradient.resize(nf);
  for (int a = 0; a < nf; ++a) {
    const int j = free_idx[a];
    if (a >= fixable_from) red.hessian(a, a) = qp.hessian(j, j);
    red.gradient(a) = qp.gradient(j);
  }

  red.ineq_matrix.resize(m, nf);
  red.ineq_matrix.leftCols(fixable_from) =
      qp.ineq_matrix.leftCols(fixable_from);
  VecX shift = VecX::Zero(m);
  VecX support =
      red.ineq_matrix.leftCols(fixable_from).cwiseAbs().rowwise().sum();
  std::vector<int> touched_rows;
  {
    int k = 0;
    for (int j = fixable_from; j < n; ++j) {
      if (side[j] == 0) {
        red.ineq_matrix.col(pos[j]) = qp.ineq_matrix.col(j);
        support += qp.ineq_matrix.col(j).cwiseAbs();
      } else {
        const double xv = x_fix(k);
        for (int i = 0; i < m; ++i) {
          const double c = qp.ineq_matrix(i, j);
          if (c != 0.0) {
            touched_rows.push_back(i);
            shift(i) += c * xv;
          }
        }
        ++k;
      }
    }
  }
  red.ineq_lower = qp.ineq_lower - shift;
  red.ineq_upper = qp.ineq_upper - shift;
  // A row whose free part vanished is a constant; if the fixing alone
  // violates it, the hint set is wrong. Only rows touched by a fixed column
  // can have lost support.
  for (int i : touched_rows) {
    if (support(i) != 0.0) continue;
    if (red.ineq_lower(i) > config.active_set_tol ||
        red.ineq_upper(i) < -config.active_set_tol)
      return false;  // the fixing alone violates a now-constant row
  }
  red.var_lower.resize(nf);
  red.var_upper.resize(nf);
  for (int a = 0; a < nf; ++a) {
    red.var_lower(a) = qp.var_lower(free_idx[a]);
    red.var_upper(a) = qp.var_upper(free_idx[a]);
  }

  std::vector<int> red_hints = row_hints;
  for (int i : hints) {
    if (i < 2 * m) continue;
    const bool lower = i < 2 * m + n;
    const int j = lower ? i - 2 * m : i - 2 * m - n;
    if (side[j] != 0 || pos[j] < 0) continue;
    red_hints.push_back(lower ? 2 * m + pos[j] : 2 * m + nf + pos[j]);
  }

  // The reduced problem is well-formed by construction.
  const QpSolution rsol = solve_qp_core(red, config, &red_hints, true);
  if (rsol.status == QpStatus::infeasible) {
    // A row went hard-infeasible because its relaxation variable was fixed
    // at zero: release every fixed variable appearing in that row and retry.
    const int b = rsol.blocking_constraint;
    if (b >= 0 && b < 2 * m) {
      const int row = b < m ? b : b - m;
      for (int j : fixed_idx)
        if (qp.ineq_matrix(row, j) != 0.0) wrong_vars.push_back(j);
    }
    return false;
  }
  if (rsol.status != QpStatus::converged) return false;

  out.primal.resize(n);
  out.dual = VecX::Zero(2 * m + 2 * n);
  for (int a = 0; a < nf; ++a) out.primal(free_idx[a]) = rsol.primal(a);
  for (int k = 0; k < n_fixed; ++k) out.primal(fixed_idx[k]) = x_fix(k);

  // Stationarity residual at the fixed coordinates determines their bound
  // multipliers; a wrong sign disproves the hinted active set.
  VecX r = qp.hessian * out.primal + qp.gradient;
  for (int i = 0; i < 2 * m; ++i) {
    const double lam = rsol.dual(i);
    if (lam == 0.0) continue;
    out.dual(i) = lam;
    const int row = i < m ? i : i - m;
    const double sgn = i < m ? 1.0 : -1.0;
    r -= (lam * sgn) * qp.ineq_matrix.row(row).transpose();
  }
  out.active_set.clear();
  for (int i : rsol.active_set) {
    if (i < 2 * m) {
      out.active_set.push_back(i);
    } else {
      const bool lower = i < 2 * m + nf;
      const int a = lower ? i - 2 * m : i - 2 * m - nf;
      const int j = free_idx[a];
      const int full = lower ? 2 * m + j : 2 * m + n + j;
      out.active_set.push_back(full);
      out.dual(full) = rsol.dual(i);
    }
  }
  for (int k = 0; k < n_fixed; ++k) {
    const int j = fixed_idx[k];
    const double lam = side[j] > 0 ? r(j) : -r(j);
    const double tol = 1e-8 * (1.0 + std::abs(qp.gradient(j)));
    if (lam < -tol) {
      wrong_vars.push_back(j);
      continue;
    }
    const int full = side[j] > 0 ? 2 * m + j : 2 * m + n + j;
    out.dual(full) = std::max(lam, 0.0);
    out.active_set.push_back(full);
  }
  if (!wrong_vars.empty()) return false;
  out.iterations = rsol.iterations;
  out.status = QpStatus::converged;
  return true;
}

// Hints that fix a variable on the wrong bound are dropped and the reduced
// solve retried; after a few failed attempts the plain solver takes over.
bool try_fixed_variable_start(const QpProblem& qp, const SolverConfig& config,
                              std::vector<int> hints, QpSolution& out) {
  const int n = qp.n(), m = qp.m();
  for (int attempt = 0; attempt < 10; ++attempt) {
    std::vector<int> wrong;
    if (try_fixed_variable_start_once(qp, config, hints, out, wrong))
      return true;
    if (wrong.empty()) return false;  // failed for a non-recoverable reason
    auto is_wrong = [&](int i) {
      if (i < 2 * m) return false;
      const int j = i < 2 * m + n ? i - 2 * m : i - 2 * m - n;
      return std::find(wrong.begin(), wrong.end(), j) != wrong.end();
    };
    hints.erase(std::remove_if(hints.begin(), hints.end(), is_wrong),
                hints.end());
  }
  return false;
}

}  // namespace

QpSolution solve_qp(const QpProblem& qp, const SolverConfig& config,
                    const std::vector<int>* warm_active_set) {
  qp.validate();
  if (warm_active_set && !warm_active_set->empty()) {
    QpSolution fast;
    if (try_fixed_variable_start(qp, config, *warm_active_set, fast))
      return fast;
  }
  return solve_qp_core(qp, config, warm_active_set, true);
}

double qp_kkt_residual(const QpProblem& qp, const QpSolution& sol) {
  const OneSided cons(qp);
  const int n = qp.n();
  VecX stat = qp.hessian * sol.primal + qp.gradient;
  double feas = 0, compl_gap = 0, dual_feas = 0;
  VecX np(n);
  for (int i = 0; i < cons.count(); ++i) {
    const double rhs = cons.rhs(i);
    if (!std::isfinite(rhs)) continue;
    const double s = cons.value(i, sol.primal) - rhs;
    feas = std::max(feas, -s);
    const double lam = sol.dual(i);
    dual_feas = std::max(dual_feas, -lam);
    compl_gap = std::max(compl_gap, std::abs(lam * s));
    if (lam != 0.0) {
      cons.normal(i, np);
      stat -= lam * np;
    }
  }
  return std::max({stat.cwiseAbs().maxCoeff(), feas, compl_gap, dual_feas});
}

void dump_qp(const QpProblem& qp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ModelError("dump_qp: cannot open " + path);
  out.precision(17);
  out << "qp_dump 1\n" << qp.n() << " " << qp.m() << "\n";
  auto write_mat = [&](const MatX& mat) {
    for (int i = 0; i < mat.rows(); ++i) {
      for (int j = 0; j < mat.cols(); ++j)
        out << mat(i, j) << (j + 1 < mat.cols() ? " " : "");
      out << "\n";
    }
  };
  auto write_vec = [&](const VecX& v) {
    for (int i = 0; i < v.size(); ++i)
      out << v(i) << (i + 1 < v.size() ? " " : "");
    out << "\n";
  };
  write_mat(qp.hessian);
  write_vec(qp.gradient);
  write_mat(qp.ineq_matrix);
  write_vec(qp.ineq_lower);
  write_vec(qp.ineq_upper);
  write_vec(qp.var_lower);
  write_vec(qp.var_upper);
}

QpProblem read_qp_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("read_qp_dump: cannot open " + path);
  std::string tag;
  int version, n, m;
  in >> tag >> version >> n >> m;
  if (tag != "qp_dump" || version != 1)
    throw ModelError("read_qp_dump: unrecognized header");
  QpProblem qp;
  // Tokenized reads: istream double extraction rejects "inf"/"-inf".
  auto read_val = [&](double& x) {
    std::string tok;
    if (in >> tok) x = std::strtod(tok.c_str(), nullptr);
  };
  auto read_mat = [&](int rows, int cols) {
    MatX mat(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) read_val(mat(i, j));
    return mat;
  };
  auto read_vec = [&](int size) {
    VecX v(size);
    for (int i = 0; i < size; ++i) read_val(v(i));
    return v;
  };
  qp.hessian = read_mat(n, n);
  qp.gradient = read_vec(n);
  qp.ineq_matrix = read_mat(m, n);
  qp.ineq_lower = read_vec(m);
  qp.ineq_upper = read_vec(m);
  qp.var_lower = read_vec(n);
  qp.var_upper = read_vec(n);
  if (!in) throw ModelError("read_qp_dump: truncated file");
  return qp;
}

}  // namespace gtmr
