// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dquad/dquad.hpp"
#include "oracles.hpp"

using dquad::FunctionId;
using dquad::HyperRect;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
  std::vector<std::string> failures;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (failures.size() < 10) failures.push_back(what);
    }
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Runs independent jobs on a few threads; results come back in input order.
template <class T>
std::vector<T> parallel_map(std::size_t n, const std::function<T(std::size_t)>& job) {
  const std::size_t lanes = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  std::vector<T> out(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  for (std::size_t l = 0; l < lanes; ++l) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) out[i] = job(i);
    });
  }
  for (auto& t : threads) t.join();
  return out;
}

dquad::DriverConfig with_tau(double tau) {
  dquad::DriverConfig c;
  c.tau_rel = tau;
  return c;
}

// 1. Converged runs meet 10 tau.
Verdict tolerance_adherence() {
  Verdict v;
  struct Job {
    int f, d;
    double tau;
  };
  std::vector<Job> jobs;
  for (int f = 1; f <= 7; ++f) {
    for (int d = 1; d <= 3; ++d) {
      for (double tau : {1e-3, 1e-6, 1e-9}) jobs.push_back({f, d, tau});
    }
  }
  const auto results = parallel_map<dquad::IntegrationResult>(jobs.size(), [&](std::size_t i) {
    const auto& j = jobs[i];
    auto cfg = with_tau(j.tau);
    cfg.rule = j.d == 1 ? dquad::RuleId::gk_tensor : dquad::RuleId::gm;
    return dquad::integrate(dquad::SuiteFunction{static_cast<FunctionId>(j.f), j.d, 0.5}, HyperRect::unit_cube(j.d), cfg);
  });
  int converged = 0;
  int guarded = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& j = jobs[i];
    const auto& r = results[i];
    const double ref = dquad::reference_integral(static_cast<FunctionId>(j.f), j.d);
    const double rel = std::fabs(r.integral - ref) / std::fabs(ref);
    const auto label = fmt("f%d d=%d tau=%g: rel_error=%.3g termination=%s", j.f, j.d, j.tau, rel,
                           dquad::to_string(r.termination).c_str());
    if (r.termination == dquad::Termination::tolerance) {
      ++converged;
      v.check(rel <= 10 * j.tau, label);
    } else {
      ++guarded;
      std::printf("  note: %s\n", label.c_str());
      if (j.f == 6 && j.tau == 1e-9 && r.termination == dquad::Termination::width_guard_exhausted) {
        v.check(rel <= 1e-6, label);
      }
    }
  }
  v.detail = fmt("%d converged within 10 tau, %d stopped on a guard", converged, guarded);
  return v;
}

// 2. Monomials up to the nominal degree on [-1,1]^d.
Verdict rule_exactness() {
  Verdict v;
  int monomials = 0;
  for (int d : {2, 3, 4}) {
    const auto t = dquad::build_gm_rule(d);
    const std::vector<double> lo(static_cast<std::size_t>(d), -1.0);
    const std::vector<double> hi(static_cast<std::size_t>(d), 1.0);
    const HyperRect cube(lo, hi);
    const auto w = dquad::apply_rule(t, cube, [](std::span<const double>) { return 1.0; });
    v.check(std::fabs(w.integral - std::ldexp(1.0, d)) <= 1e-13, fmt("d=%d weight sum %.17g", d, w.integral));
    std::vector<int> k(static_cast<std::size_t>(d), 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t axis, int left) {
      if (axis == k.size()) {
        const auto e = dquad::apply_rule(t, cube, [&](std::span<const double> x) {
          double p = 1.0;
          for (std::size_t i = 0; i < k.size(); ++i) p *= std::pow(x[i], k[i]);
          return p;
        });
        const double exact = oracle::monomial_integral(k);
        ++monomials;
        v.check(std::fabs(e.integral - exact) <= 1e-10 * std::max(1.0, std::fabs(exact)),
                fmt("d=%d monomial of degree %d off by %.3g", d, t.degree() - left, e.integral - exact));
        return;
      }
      for (int p = 0; p <= left; ++p) {
        k[axis] = p;
        rec(axis + 1, left - p);
      }
      k[axis] = 0;
    };
    rec(0, t.degree());
  }
  v.detail = fmt("%d monomials of degree <= 7 exact for d = 2, 3, 4", monomials);
  return v;
}

// 3. Node counts against the orbit oracle; count / 2^d bounded by the d = 8 ratio.
Verdict node_count_scaling() {
  Verdict v;
  const double c8 = static_cast<double>(dquad::build_gm_rule(8).node_count()) / 256.0;
  for (int d = 2; d <= 12; ++d) {
    const auto t = dquad::build_gm_rule(d);
    std::size_t count = 0;
    for (const auto& o : t.orbits()) {
      count += d <= 7 ? oracle::orbit_count_brute(o.generator) : oracle::orbit_count_formula(o.generator);
    }
    v.check(count == t.node_count(), fmt("d=%d oracle %zu vs rule %zu", d, count, t.node_count()));
    if (d >= 8) {
      const double ratio = static_cast<double>(t.node_count()) / std::ldexp(1.0, d);
      v.check(ratio <= c8, fmt("d=%d ratio %.4f exceeds %.4f", d, ratio, c8));
    }
  }
  v.detail = fmt("d = 2..12 match; node_count / 2^d <= %.4f for d >= 8", c8);
  return v;
}

struct EquivalenceRun {
  int f = 1, d = 2, P = 1;
  double tau = 1e-4;
  dquad::DistributedResult result;
  bool conserved_each_iteration = true;
  std::size_t largest_batch = 0;
};

std::vector<EquivalenceRun> equivalence_runs() {
  std::vector<EquivalenceRun> jobs;
  for (int f = 1; f <= 7; ++f) {
    for (int d : {2, 3}) {
      for (double tau : {1e-4, 1e-6}) {
        for (int P : {1, 2, 4, 8}) {
          EquivalenceRun r;
          r.f = f;
          r.d = d;
          r.tau = tau;
          r.P = P;
          jobs.push_back(r);
        }
      }
    }
  }
  return parallel_map<EquivalenceRun>(jobs.size(), [&](std::size_t i) {
    EquivalenceRun r = jobs[i];
    const dquad::RedistributionConfig rcfg;
    auto obs = [&](const dquad::EngineSnapshot& s) {
      if (!s.redistribution_done) return;
      if (s.stored_after + s.in_transit_after != s.children_produced + s.carried_in_transit) r.conserved_each_iteration = false;
      for (auto n : s.batch_sizes) r.largest_batch = std::max(r.largest_batch, n);
    };
    r.result = dquad::run_distributed(dquad::SuiteFunction{static_cast<FunctionId>(r.f), r.d, 0.5},
                                      HyperRect::unit_cube(r.d), with_tau(r.tau), rcfg, r.P, {}, obs);
    return r;
  });
}

// 4. P workers agree with one; regions conserved.
Verdict single_multi_equivalence(const std::vector<EquivalenceRun>& runs) {
  Verdict v;
  int compared = 0;
  for (const auto& r : runs) {
    v.check(r.conserved_each_iteration && r.result.conservation_held,
            fmt("f%d d=%d tau=%g P=%d: region count not conserved", r.f, r.d, r.tau, r.P));
    if (r.P == 1) continue;
    const auto& one = *std::find_if(runs.begin(), runs.end(), [&](const EquivalenceRun& o) {
      return o.P == 1 && o.f == r.f && o.d == r.d && o.tau == r.tau;
    });
    const double diff = std::fabs(r.result.result.integral - one.result.result.integral);
    const double bound = std::max(r.result.result.error, one.result.result.error);
    ++compared;
    v.check(diff <= bound, fmt("f%d d=%d tau=%g P=%d: |I_P - I_1| = %.3g > %.3g (%s / %s)", r.f, r.d, r.tau, r.P, diff,
                               bound, dquad::to_string(r.result.result.termination).c_str(),
                               dquad::to_string(one.result.result.termination).c_str()));
  }
  v.detail = fmt("%d multi-worker runs within max(eps_P, eps_1); conservation held every iteration", compared);
  return v;
}

// 5. Schedule, planning, cap, and single counting of in-flight work.
Verdict protocol_properties(const std::vector<EquivalenceRun>& runs) {
  Verdict v;
  for (int P : {2, 3, 4, 6, 8, 12}) {
    std::set<dquad::RankPair> seen;
    for (int round = 0; round < dquad::round_robin_cycle(P); ++round) {
      std::set<int> busy;
      for (const auto& [a, b] : dquad::round_robin_pairs(P, static_cast<std::uint64_t>(round))) {
        v.check(busy.insert(a).second && busy.insert(b).second, fmt("P=%d round %d reuses a rank", P, round));
        seen.insert({a, b});
      }
    }
    v.check(seen.size() == static_cast<std::size_t>(P * (P - 1) / 2), fmt("P=%d: %zu pairs in a cycle", P, seen.size()));
  }
  // all-role sweep for the planner
  for (std::size_t a = 0; a <= 12; ++a) {
    for (std::size_t b = 0; b <= 12; ++b) {
      const std::vector<std::size_t> c = {a, b, 6, 6};
      const double share = dquad::fair_share(c);
      const auto ra = dquad::classify_rank(a, share);
      const auto rb = dquad::classify_rank(b, share);
      const auto plan = dquad::plan_transfer({0, 1}, c, 512);
      const bool opposite = (ra == dquad::Role::donor && rb == dquad::Role::receiver) ||
                            (ra == dquad::Role::receiver && rb == dquad::Role::donor);
      v.check(plan.has_value() == opposite, fmt("counts (%zu, %zu): plan presence wrong", a, b));
    }
  }
  std::size_t largest = 0;
  for (const auto& r : runs) largest = std::max(largest, r.largest_batch);
  v.check(largest <= 512, fmt("a batch of %zu regions exceeded the cap", largest));

  // in-flight ledger on imbalanced runs; a delay of two iterations keeps
  // batches on the wire across metadata exchanges
  std::size_t exchanges = 0;
  std::size_t batches_seen = 0;
  std::size_t run_count = 0;
  const std::vector<std::pair<int, double>> ledger_runs = {{2, 1e-12}, {3, 1e-7}, {3, 1e-9}, {4, 1e-7}};
  for (const auto& [d, tau] : ledger_runs) {
    auto cfg = with_tau(tau);
    cfg.max_regions = std::size_t{1} << 20;
    dquad::EngineOptions opts;
    opts.sim.delivery_delay = 2;
    std::set<std::uint64_t> all;
    auto obs = [&](const dquad::EngineSnapshot& s) {
      if (s.redistribution_done) {
        for (auto n : s.batch_sizes) v.check(n <= 512, fmt("batch of %zu", n));
        return;
      }
      ++exchanges;
      std::multiset<std::pair<int, std::uint64_t>> reported(s.reported_inflight.begin(), s.reported_inflight.end());
      std::multiset<std::pair<int, std::uint64_t>> transit(s.in_transit.begin(), s.in_transit.end());
      v.check(reported == transit, fmt("iteration %zu: in-flight ledger disagrees with the wire", s.iteration));
      for (const auto& p : transit) all.insert(p.second);
      dquad::CompensatedSum sum;
      for (const auto& rec : s.records) sum.add(rec.partial_integral);
      v.check(s.reduced.integral == sum.value(), fmt("iteration %zu: integral counts in-flight work", s.iteration));
    };
    (void)dquad::run_distributed(dquad::SuiteFunction{FunctionId::f2, d, dquad::kCornerPeakCenter},
                                 HyperRect::unit_cube(d), cfg, {}, 8, opts, obs);
    v.check(!all.empty(), fmt("d=%d tau=%g: no batch was ever in flight at an exchange", d, tau));
    batches_seen += all.size();
    ++run_count;
  }
  v.check(exchanges >= 100, fmt("only %zu instrumented exchanges", exchanges));
  v.detail = fmt("schedules complete and disjoint; planner only pairs donor with receiver; largest batch %zu; "
                 "%zu exchanges over %zu imbalanced runs, %zu batches tracked",
                 largest, exchanges, run_count, batches_seen);
  return v;
}

// 6. Conservative error at convergence bounds the settled error.
Verdict conservative_convergence(const std::vector<EquivalenceRun>& runs) {
  Verdict v;
  int checked = 0;
  for (const auto& r : runs) {
    if (!r.result.result.converged) continue;
    ++checked;
    v.check(r.result.final_error_conservative >= r.result.settled_error * (1 - 1e-12),
            fmt("f%d d=%d tau=%g P=%d: conservative %.6g < settled %.6g", r.f, r.d, r.tau, r.P,
                r.result.final_error_conservative, r.result.settled_error));
  }
  v.check(checked > 0, "no converged runs");
  v.detail = fmt("%d converged runs, eps_conservative >= settled eps", checked);
  return v;
}

// 7. Corner-shifted peak on 8 workers.
Verdict imbalance_phenomenology() {
  Verdict v;
  const auto r = dquad::run_distributed(dquad::SuiteFunction{FunctionId::f2, 4, dquad::kCornerPeakCenter},
                                        HyperRect::unit_cube(4), with_tau(1e-6), {}, 8);
  double lo = 1.0;
  double hi = 0.0;
  for (const auto& t : r.workers) {
    lo = std::min(lo, t.idle_fraction());
    hi = std::max(hi, t.idle_fraction());
  }
  v.check(hi - lo > 0.1, fmt("idle spread %.3f", hi - lo));
  v.check(r.regions_transferred > 0, "nothing transferred");
  v.detail = fmt("idle fraction %.3f..%.3f (spread %.3f), %zu regions in %zu messages, %s", lo, hi, hi - lo,
                 r.regions_transferred, r.messages, dquad::to_string(r.result.termination).c_str());
  return v;
}

// 8. Same spec, same bytes.
Verdict determinism() {
  Verdict v;
  dquad::ExperimentSpec s;
  s.functions = {*dquad::parse_function("f1"), *dquad::parse_function("f2-corner"), *dquad::parse_function("f6")};
  s.dims = {2, 3};
  s.tolerances = {1e-4, 1e-6};
  s.workers = {1, 4};
  std::size_t bytes = 0;
  for (auto kind : {dquad::Experiment::accuracy, dquad::Experiment::scaling, dquad::Experiment::idle}) {
    std::ostringstream a;
    std::ostringstream b;
    (void)dquad::run_experiment(kind, s, a);
    (void)dquad::run_experiment(kind, s, b);
    v.check(a.str() == b.str(), dquad::to_string(kind) + " CSV differs between runs");
    bytes += a.str().size();
  }
  v.detail = fmt("accuracy, scaling and idle CSVs identical across two runs (%zu bytes)", bytes);
  return v;
}

// 9. Genz-Malik against tensor Gauss-Kronrod.
Verdict gk_gm_cross_check() {
  Verdict v;
  struct Job {
    FunctionId f;
    int d;
  };
  std::vector<Job> jobs;
  for (auto f : {FunctionId::f1, FunctionId::f4, FunctionId::f5}) {
    for (int d : {2, 3}) jobs.push_back({f, d});
  }
  struct Pair {
    dquad::IntegrationResult gm, gk;
  };
  const auto res = parallel_map<Pair>(jobs.size(), [&](std::size_t i) {
    const dquad::SuiteFunction fn{jobs[i].f, jobs[i].d, 0.5};
    auto cfg = with_tau(1e-8);
    Pair p;
    p.gm = dquad::integrate(fn, HyperRect::unit_cube(jobs[i].d), cfg);
    cfg.rule = dquad::RuleId::gk_tensor;
    p.gk = dquad::integrate(fn, HyperRect::unit_cube(jobs[i].d), cfg);
    return p;
  });
  double worst = 0.0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const double diff = std::fabs(res[i].gm.integral - res[i].gk.integral);
    const double bound = std::max(res[i].gm.error, res[i].gk.error);
    worst = std::max(worst, diff / bound);
    v.check(diff <= bound, fmt("%s d=%d: |GM - GK| = %.3g > %.3g", dquad::to_string(jobs[i].f).c_str(), jobs[i].d, diff, bound));
  }
  bool refused = false;
  try {
    (void)dquad::make_rule(dquad::RuleId::gk_tensor, 7);
  } catch (const dquad::UnsupportedDimension&) {
    refused = true;
  }
  v.check(refused, "GK accepted d = 7");
  v.detail = fmt("6 pairs agree (worst |diff| / bound = %.3f); GK refuses d = 7", worst);
  return v;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), secs);
    for (const auto& f : v.failures) std::printf("    %s\n", f.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
  };

  report(1, "tolerance adherence", tolerance_adherence);
  report(2, "rule exactness", rule_exactness);
  report(3, "node-count scaling", node_count_scaling);
  std::vector<EquivalenceRun> runs;
  report(4, "single/multi equivalence", [&] {
    runs = equivalence_runs();
    return single_multi_equivalence(runs);
  });
  report(5, "protocol properties", [&] { return protocol_properties(runs); });
  report(6, "conservative convergence", [&] { return conservative_convergence(runs); });
  report(7, "imbalance phenomenology", imbalance_phenomenology);
  report(8, "determinism", determinism);
  report(9, "GK/GM cross-check", gk_gm_cross_check);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
