// Benchmark: serial vs OpenMP horizon linearization on the default
// scenario. Also reports the maximum elementwise deviation between the two
// paths (should be exactly zero; stages are independent).

#include <chrono>
#include <cstdlib>
#include <iostream>

#include "gtmr/dynamics.hpp"
#include "gtmr/scenario.hpp"
#include "gtmr/sqp.hpp"

using Clock = std::chrono::steady_clock;

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 50;

  const gtmr::Scenario s = gtmr::load_scenario("");
  gtmr::OcpProblem p;
  p.horizon_steps = s.horizon_steps;
  p.step = s.horizon_step;
  p.weights = s.weights;
  p.gtmr = s.gtmr;
  p.alloc = gtmr::build_allocation(s.gtmr);
  p.optics = s.optics;
  p.safety_margin = s.safety_margin;
  p.initial_state = s.initial_state();
  p.stages.resize(s.horizon_steps + 1);
  for (int k = 0; k <= s.horizon_steps; ++k)
    p.stages[k] = gtmr::stage_data_at(k * p.step, s);

  const gtmr::OcpSolution guess = gtmr::cold_start_guess(p, p.initial_state);
  std::vector<gtmr::ExtendedState> states = guess.states;
  std::vector<gtmr::ControlRate> controls = guess.controls;
  // Perturb the hover guess so the Jacobians are not all identical.
  for (size_t k = 0; k < states.size(); ++k) {
    states[k].body.position += 0.01 * k * gtmr::Vec3(1, -1, 0.5);
    states[k].body.euler += 0.002 * k * gtmr::Vec3(1, 1, -1);
  }

  auto time_path = [&](bool parallel) {
    const auto tic = Clock::now();
    for (int r = 0; r < repeats; ++r)
      (void)gtmr::linearize_horizon(p, states, controls, parallel);
    return std::chrono::duration<double>(Clock::now() - tic).count() / repeats;
  };

  const double t_serial = time_path(false);
  const double t_parallel = time_path(true);

  const auto ref = gtmr::linearize_horizon(p, states, controls, false);
  const auto par = gtmr::linearize_horizon(p, states, controls, true);
  double max_dev = 0;
  for (size_t k = 0; k < ref.size(); ++k) {
    if (ref[k].a.size() > 0)
      max_dev = std::max(max_dev,
                         (ref[k].a - par[k].a).cwiseAbs().maxCoeff());
    max_dev = std::max(
        max_dev, (ref[k].out_jac_x - par[k].out_jac_x).cwiseAbs().maxCoeff());
    max_dev = std::max(
        max_dev, (ref[k].con_val - par[k].con_val).cwiseAbs().maxCoeff());
  }

  std::cout << "horizon stages:      " << p.horizon_steps + 1 << "\n"
            << "repeats:             " << repeats << "\n"
            << "serial per horizon:  " << t_serial * 1e3 << " ms\n"
            << "openmp per horizon:  " << t_parallel * 1e3 << " ms\n"
            << "speedup:             " << t_serial / t_parallel << "x\n"
            << "max deviation:       " << max_dev << "\n";
  return max_dev == 0.0 ? 0 : 1;
}
