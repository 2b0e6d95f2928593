// Integrate a user function over a non-unit box, first on one worker, then on
// four simulated workers.
//
//   f(x, y, z) = exp(-(x^2 + y^2 + z^2))  over [-2,2] x [-1,3] x [0,1]

#include <cmath>
#include <cstdio>
#include <numbers>
#include <span>

#include "dquad/dquad.hpp"

int main() {
  auto f = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::exp(-s);
  };
  const dquad::HyperRect box({-2.0, -1.0, 0.0}, {2.0, 3.0, 1.0});

  // separable, so the exact value is a product of erf differences
  const double h = std::sqrt(std::numbers::pi) / 2.0;
  const double exact = h * (std::erf(2.0) - std::erf(-2.0)) * h * (std::erf(3.0) - std::erf(-1.0)) * h * std::erf(1.0);

  dquad::DriverConfig cfg;
  cfg.tau_rel = 1e-9;
  const auto single = dquad::integrate(f, box, cfg);
  std::printf("1 worker : I=%.15f eps=%.2e iterations=%zu f_evals=%zu (%s)\n", single.integral, single.error,
              single.iterations, single.total_f_evals, dquad::to_string(single.termination).c_str());

  const auto multi = dquad::run_distributed(f, box, cfg, dquad::RedistributionConfig{}, 4);
  std::printf("4 workers: I=%.15f eps=%.2e iterations=%zu messages=%zu regions moved=%zu\n", multi.result.integral,
              multi.result.error, multi.result.iterations, multi.messages, multi.regions_transferred);
  std::printf("exact    : I=%.15f\n", exact);
  return single.converged && multi.result.converged ? 0 : 1;
}
