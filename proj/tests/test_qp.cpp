#include <doctest.h>

#include <cstdio>
#include <random>

#include "gtmr/qp.hpp"

using namespace gtmr;

namespace {

QpProblem unconstrained(int n) {
  QpProblem qp;
  qp.hessian = MatX::Identity(n, n);
  qp.gradient = VecX::LinSpaced(n, 1.0, n);
  qp.ineq_matrix = MatX(0, n);
  qp.ineq_lower = VecX(0);
  qp.ineq_upper = VecX(0);
  qp.var_lower = VecX::Constant(n, -kInf);
  qp.var_upper = VecX::Constant(n, kInf);
  return qp;
}

QpProblem random_feasible(std::mt19937& rng, int n, int m) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  QpProblem qp;
  MatX a = MatX::NullaryExpr(n, n, [&](Eigen::Index, Eigen::Index) {
    return u(rng);
  });
  qp.hessian = a.transpose() * a + 0.1 * MatX::Identity(n, n);
  qp.gradient = VecX::NullaryExpr(n, [&](Eigen::Index) { return u(rng); });
  qp.ineq_matrix = MatX::NullaryExpr(m, n, [&](Eigen::Index, Eigen::Index) {
    return u(rng);
  });
  // Bounds straddling a known point keep the problem feasible.
  const VecX x0 = VecX::NullaryExpr(n, [&](Eigen::Index) { return u(rng); });
  const VecX ax = qp.ineq_matrix * x0;
  qp.ineq_lower = VecX(m);
  qp.ineq_upper = VecX(m);
  for (int i = 0; i < m; ++i) {
    qp.ineq_lower(i) = ax(i) - 0.05 - 0.5 * std::abs(u(rng));
    qp.ineq_upper(i) = ax(i) + 0.05 + 0.5 * std::abs(u(rng));
    const int style = static_cast<int>((u(rng) + 1.0) * 1.5);
    if (style == 0) qp.ineq_lower(i) = -kInf;
    if (style == 1) qp.ineq_upper(i) = kInf;
  }
  qp.var_lower = x0.array() - 0.05 - 1.0;
  qp.var_upper = x0.array() + 0.05 + 1.0;
  return qp;
}

}  // namespace

TEST_CASE("unconstrained minimizer is -H^-1 g") {
  const QpProblem qp = unconstrained(5);
  const SolverConfig cfg;
  const QpSolution sol = solve_qp(qp, cfg);
  CHECK(sol.status == QpStatus::converged);
  CHECK((sol.primal + qp.gradient).norm() < 1e-7);
  CHECK(sol.active_set.empty());
  CHECK(qp_kkt_residual(qp, sol) < 1e-7);
}

TEST_CASE("single active bound with analytic solution") {
  // min 1/2 (x^2 + y^2) + x, s.t. x >= 1: solution (1, 0), multiplier 2.
  QpProblem qp = unconstrained(2);
  qp.gradient << 1.0, 0.0;
  qp.var_lower << 1.0, -kInf;
  const SolverConfig cfg;
  const QpSolution sol = solve_qp(qp, cfg);
  CHECK(sol.status == QpStatus::converged);
  CHECK(sol.primal(0) == doctest::Approx(1.0));
  CHECK(sol.primal(1) == doctest::Approx(0.0));
  REQUIRE(sol.active_set.size() == 1);
  // Index layout: lower variable bounds start at 2m = 0.
  CHECK(sol.active_set[0] == 0);
  CHECK(sol.dual(sol.active_set[0]) == doctest::Approx(2.0));
  CHECK(qp_kkt_residual(qp, sol) < 1e-7);
}

TEST_CASE("two-sided row: correct side activates") {
  // min 1/2 x'x subject to 1 <= x1 + x2 <= 2 pushes onto the lower side.
  QpProblem qp = unconstrained(2);
  qp.gradient.setZero();
  qp.ineq_matrix = MatX::Ones(1, 2);
  qp.ineq_lower = VecX::Constant(1, 1.0);
  qp.ineq_upper = VecX::Constant(1, 2.0);
  const QpSolution sol = solve_qp(qp, SolverConfig{});
  CHECK(sol.status == QpStatus::converged);
  CHECK(sol.primal(0) == doctest::Approx(0.5));
  CHECK(sol.primal(1) == doctest::Approx(0.5));
  CHECK(qp_kkt_residual(qp, sol) < 1e-7);
}

TEST_CASE("infeasible problem is detected") {
  // x >= 1 (row) against x <= 0 (variable bound).
  QpProblem qp = unconstrained(1);
  qp.gradient.setZero();
  qp.ineq_matrix = MatX::Ones(1, 1);
  qp.ineq_lower = VecX::Constant(1, 1.0);
  qp.ineq_upper = VecX::Constant(1, kInf);
  qp.var_upper << 0.0;
  const QpSolution sol = solve_qp(qp, SolverConfig{});
  CHECK(sol.status == QpStatus::infeasible);
}

TEST_CASE("randomized feasible instances satisfy the KKT conditions") {
  std::mt19937 rng(61);
  SolverConfig cfg;
  cfg.max_qp_iters = 500;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 12;
    const int m = 1 + trial % 9;
    const QpProblem qp = random_feasible(rng, n, m);
    const QpSolution sol = solve_qp(qp, cfg);
    REQUIRE(sol.status == QpStatus::converged);
    CHECK(qp_kkt_residual(qp, sol) < 1e-6);
  }
}

TEST_CASE("warm hints do not change the minimizer") {
  std::mt19937 rng(67);
  SolverConfig cfg;
  cfg.max_qp_iters = 500;
  for (int trial = 0; trial < 20; ++trial) {
    const QpProblem qp = random_feasible(rng, 8, 6);
    const QpSolution cold = solve_qp(qp, cfg);
    REQUIRE(cold.status == QpStatus::converged);
    const QpSolution warm = solve_qp(qp, cfg, &cold.active_set);
    REQUIRE(warm.status == QpStatus::converged);
    CHECK((cold.primal - warm.primal).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(warm.iterations <= cold.iterations + 1);
  }
}

TEST_CASE("qp dump round trip") {
  std::mt19937 rng(71);
  const QpProblem qp = random_feasible(rng, 4, 3);
  const char* path = "qp_roundtrip.txt";
  dump_qp(qp, path);
  const QpProblem back = read_qp_dump(path);
  std::remove(path);
  CHECK((qp.hessian - back.hessian).cwiseAbs().maxCoeff() == 0.0);
  CHECK((qp.gradient - back.gradient).cwiseAbs().maxCoeff() == 0.0);
  CHECK((qp.ineq_matrix - back.ineq_matrix).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < qp.m(); ++i) {
    CHECK(qp.ineq_lower(i) == back.ineq_lower(i));
    CHECK(qp.ineq_upper(i) == back.ineq_upper(i));
  }
  for (int j = 0; j < qp.n(); ++j) {
    CHECK(qp.var_lower(j) == back.var_lower(j));
    CHECK(qp.var_upper(j) == back.var_upper(j));
  }
}

TEST_CASE("validation rejects inconsistent problems") {
  QpProblem qp = unconstrained(2);
  qp.var_lower << 1.0, 0.0;
  qp.var_upper << 0.0, kInf;
  CHECK_THROWS_AS(solve_qp(qp, SolverConfig{}), ModelError);

  qp = unconstrained(2);
  qp.hessian(0, 1) = 0.5;  // asymmetric
  CHECK_THROWS_AS(solve_qp(qp, SolverConfig{}), ModelError);
}
