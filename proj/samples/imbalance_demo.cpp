// Where does the time go when the work sits in one corner? Runs the product
// peak moved to (1/4, ..., 1/4) on 8 simulated workers and prints each rank's
// compute/idle split and traffic.

#include <cstdio>
#include <cstdlib>

#include "dquad/dquad.hpp"

int main(int argc, char** argv) {
  const int d = argc > 1 ? std::atoi(argv[1]) : 3;
  const int workers = argc > 2 ? std::atoi(argv[2]) : 8;
  const auto integrand = dquad::make_integrand(dquad::FunctionId::f2, d, dquad::kCornerPeakCenter);

  dquad::DriverConfig cfg;
  cfg.tau_rel = 1e-6;
  const auto run = dquad::run_distributed(integrand.evaluate, dquad::HyperRect::unit_cube(d), cfg,
                                          dquad::RedistributionConfig{}, workers);
  const auto& r = run.result;
  std::printf("I=%.12g exact=%.12g eps=%.2e iterations=%zu termination=%s virtual time=%.0f\n", r.integral,
              integrand.reference_value, r.error, r.iterations, dquad::to_string(r.termination).c_str(), run.elapsed);
  std::printf("rank  compute  idle   msgs_out regions_out regions_in\n");
  for (const auto& t : run.workers) {
    std::printf("%4d  %6.3f  %6.3f %8zu %11zu %10zu\n", t.rank, t.compute_fraction(), t.idle_fraction(), t.messages_out,
                t.regions_out, t.regions_in);
  }
}
