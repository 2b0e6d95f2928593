#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dquad/compensated_sum.hpp"
#include "dquad/region.hpp"
#include "dquad/rules.hpp"

namespace dquad {

/// Error budget a region may carry and still be finalized, given the global
/// budget max(abs_floor, |I| tau_rel) and the region's share of the domain volume.
using NegligibilityPolicy = std::function<double(double global_budget, double volume_fraction)>;

/// Volume-proportional budgeting with a safety factor below one. If every
/// finalized region satisfies it, their summed error stays under
/// safety * global budget.
struct VolumeBudgetThreshold {
  double safety = 0.5;
  double operator()(double global_budget, double volume_fraction) const {
    return global_budget * volume_fraction * safety;
  }
};

struct DriverConfig {
  double tau_rel = 1e-6;
  double abs_floor = 1e-16;
  std::size_t max_iterations = 2000;
  std::size_t max_regions = std::size_t{1} << 24;
  double min_width_ulp_factor = 8.0;
  RuleId rule = RuleId::gm;
  /// Regions in the initial uniform partition; 0 means 2d.
  std::size_t initial_regions = 0;
  NegligibilityPolicy negligible = VolumeBudgetThreshold{};

  void validate() const {
    if (!(tau_rel > 0.0) || !std::isfinite(tau_rel)) throw ContractViolation("DriverConfig: tau_rel must be > 0");
    if (!(abs_floor >= 0.0)) throw ContractViolation("DriverConfig: abs_floor must be >= 0");
    if (max_regions < 1) throw ContractViolation("DriverConfig: max_regions must be >= 1");
    if (max_iterations < 1) throw ContractViolation("DriverConfig: max_iterations must be >= 1");
    if (!(min_width_ulp_factor > 0.0)) throw ContractViolation("DriverConfig: min_width_ulp_factor must be > 0");
    if (!negligible) throw ContractViolation("DriverConfig: negligibility policy is empty");
  }

  [[nodiscard]] double budget(double integral) const { return std::max(abs_floor, std::fabs(integral) * tau_rel); }
};

struct GlobalEstimate {
  double integral = 0.0;
  double error = 0.0;
  double finalized_integral = 0.0;
  double finalized_error = 0.0;
  std::size_t active_regions = 0;
};

enum class Termination { tolerance, max_iterations, max_regions, width_guard_exhausted };

[[nodiscard]] inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::tolerance: return "tolerance";
    case Termination::max_iterations: return "max_iterations";
    case Termination::max_regions: return "max_regions";
    case Termination::width_guard_exhausted: return "width_guard_exhausted";
  }
  return "unknown";
}

struct IntegrationResult {
  double integral = 0.0;
  double error = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t total_f_evals = 0;
  std::size_t peak_regions = 0;
  Termination termination = Termination::max_iterations;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t active_regions = 0;
  double integral = 0.0;
  double error = 0.0;
  std::size_t f_evals = 0;
};

using TraceSink = std::function<void(const IterationRecord&)>;

/// Contributions of regions that left the active set.
struct FinalizedTotals {
  CompensatedSum integral;
  CompensatedSum error;
  std::size_t width_guarded = 0;
};

/// Domain data the classifier needs: total volume and per-axis extents.
struct DomainInfo {
  double volume = 1.0;
  std::vector<double> extents;

  static DomainInfo of(const HyperRect& domain) {
    DomainInfo info;
    info.volume = dquad::volume(domain);
    for (int a = 0; a < domain.dim(); ++a) info.extents.push_back(domain.extent(a));
    return info;
  }
};

/// Sums finalized + active contributions with compensated accumulators, in store order.
[[nodiscard]] inline GlobalEstimate reduce_store(const RegionStore& store, const FinalizedTotals& totals) {
  CompensatedSum integral = totals.integral;
  CompensatedSum error = totals.error;
  for (double v : store.integral()) integral.add(v);
  for (double v : store.error()) error.add(v);
  return {integral.value(), error.value(), totals.integral.value(), totals.error.value(), store.size()};
}

/// Evaluates every region in `store` (or only those without their own
/// estimates when `pending_only`), then reduces. Adds the number of integrand
/// calls to `f_evals`.
template <Integrand F>
GlobalEstimate evaluate_batch(RegionStore& store, RuleEvaluator& evaluator, F& f, const FinalizedTotals& totals,
                              std::size_t& f_evals, bool pending_only = false) {
  if (store.dim() != evaluator.table().dim()) {
    throw ContractViolation("evaluate_batch: store and rule dimensions differ");
  }
  const auto d = static_cast<std::size_t>(store.dim());
  std::vector<double> center(d);
  std::vector<double> half(d);
  RuleEvaluation eval;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (pending_only && store.evaluated(i)) continue;
    store.center_halfwidth(i, center, half);
    evaluator.evaluate(center, half, f, eval);
    f_evals += eval.f_evals;
    store.set_estimate(i, eval.integral, eval.error, select_axis(eval));
  }
  return reduce_store(store, totals);
}

template <Integrand F>
GlobalEstimate evaluate_batch(RegionStore& store, const RuleTable& table, F& f, const FinalizedTotals& totals) {
  RuleEvaluator ev(table);
  std::size_t evals = 0;
  return evaluate_batch(store, ev, f, totals, evals);
}

/// Stopping rule: eps <= max(abs_floor, |I| tau_rel).
[[nodiscard]] inline bool check_convergence(double integral, double error, const DriverConfig& cfg) {
  return error <= cfg.budget(integral);
}

[[nodiscard]] inline bool check_convergence(const GlobalEstimate& g, const DriverConfig& cfg) {
  return check_convergence(g.integral, g.error, cfg);
}

struct FilterSplitOutcome {
  RegionStore children;
  std::size_t finalized = 0;
  std::size_t width_guarded = 0;
  std::size_t split = 0;
};

/// Single pass over an evaluated store. Each region is either finalized
/// (negligible error, or its split axis is already at floating-point
/// resolution) and folded into `totals`, or replaced by its two halves.
/// Children inherit half the parent integral and the full parent error until
/// they are evaluated themselves.
[[nodiscard]] inline FilterSplitOutcome classify_filter_split(const RegionStore& store, const GlobalEstimate& g,
                                                              const DriverConfig& cfg, const DomainInfo& domain,
                                                              FinalizedTotals& totals) {
  const int d = store.dim();
  FilterSplitOutcome out{RegionStore(d)};
  out.children.reserve(2 * store.size());
  const double budget = cfg.budget(g.integral);
  const double width_floor = cfg.min_width_ulp_factor * std::numeric_limits<double>::epsilon();
  const auto integral = store.integral();
  const auto error = store.error();
  const auto axis = store.split_axis();
  std::vector<double> bounds(2 * static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (axis[i] < 0) throw ContractViolation("classify_filter_split: region was not evaluated");
    const double vol = store.region_volume(i);
    if (error[i] <= cfg.negligible(budget, vol / domain.volume)) {
      totals.integral.add(integral[i]);
      totals.error.add(error[i]);
      ++out.finalized;
      continue;
    }
    const int a = axis[i];
    const auto ua = static_cast<std::size_t>(a);
    const double lo = store.lower(a)[i];
    const double hi = store.upper(a)[i];
    const double mid = midpoint(lo, hi);
    if (hi - lo <= width_floor * domain.extents[ua] || !(lo < mid && mid < hi)) {
      totals.integral.add(integral[i]);
      totals.error.add(error[i]);
      ++totals.width_guarded;
      ++out.width_guarded;
      continue;
    }
    for (int b = 0; b < d; ++b) {
      const auto ub = static_cast<std::size_t>(b);
      bounds[2 * ub] = store.lower(b)[i];
      bounds[2 * ub + 1] = store.upper(b)[i];
    }
    bounds[2 * ua + 1] = mid;
    out.children.push_back_bounds(bounds, 0.5 * integral[i], error[i]);
    bounds[2 * ua] = mid;
    bounds[2 * ua + 1] = hi;
    out.children.push_back_bounds(bounds, 0.5 * integral[i], error[i]);
    ++out.split;
  }
  return out;
}

[[nodiscard]] inline std::size_t initial_region_count(const DriverConfig& cfg, int dim) {
  return cfg.initial_regions > 0 ? cfg.initial_regions : 2 * static_cast<std::size_t>(dim);
}

/// Batch h-adaptive integration on one worker: evaluate everything, test
/// convergence, finalize negligible regions and bisect the rest, repeat.
template <Integrand F>
[[nodiscard]] IntegrationResult integrate(F&& f, const HyperRect& domain, const DriverConfig& cfg,
                                          const TraceSink& trace = {}) {
  cfg.validate();
  const RuleTable table = make_rule(cfg.rule, domain.dim());
  RuleEvaluator evaluator(table);
  const DomainInfo info = DomainInfo::of(domain);

  RegionStore store(domain.dim());
  for (const auto& r : uniform_partition(domain, initial_region_count(cfg, domain.dim()))) store.push_back(r);

  FinalizedTotals totals;
  IntegrationResult result;
  auto finish = [&](const GlobalEstimate& g, Termination why) {
    result.integral = g.integral;
    result.error = g.error;
    result.termination = why;
    result.converged = why == Termination::tolerance;
    return result;
  };

  GlobalEstimate g;
  for (std::size_t iter = 1; iter <= cfg.max_iterations; ++iter) {
    result.iterations = iter;
    result.peak_regions = std::max(result.peak_regions, store.size());
    std::size_t evals = 0;
    g = evaluate_batch(store, evaluator, f, totals, evals);
    result.total_f_evals += evals;
    if (trace) trace({iter, store.size(), g.integral, g.error, evals});
    if (check_convergence(g, cfg)) return finish(g, Termination::tolerance);
    if (store.empty()) return finish(g, Termination::width_guard_exhausted);
    auto outcome = classify_filter_split(store, g, cfg, info, totals);
    if (outcome.children.size() > cfg.max_regions) return finish(g, Termination::max_regions);
    store = std::move(outcome.children);
  }
  return finish(g, Termination::max_iterations);
}

}  // namespace dquad
