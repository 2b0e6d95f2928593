#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dquad/driver.hpp"
#include "dquad/engine.hpp"
#include "dquad/errors.hpp"
#include "dquad/integrands.hpp"
#include "dquad/redistribution.hpp"
#include "dquad/rules.hpp"

namespace dquad {

/// Sweep description is malformed (empty axis, non-positive tolerance, ...).
class InvalidSpec : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

[[nodiscard]] inline std::optional<RuleId> parse_rule(std::string_view s) {
  if (s == "gm") return RuleId::gm;
  if (s == "gk-tensor" || s == "gk") return RuleId::gk_tensor;
  return std::nullopt;
}

[[nodiscard]] inline std::optional<Backend> parse_backend(std::string_view s) {
  if (s == "deterministic_sim" || s == "sim") return Backend::deterministic_sim;
  if (s == "concurrent") return Backend::concurrent;
  return std::nullopt;
}

namespace detail {

inline int parse_int(std::string_view s, const char* what) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) throw InvalidSpec(std::string(what) + ": not an integer: '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

/// "3:9" -> 3..9, "3:9:3" -> 3,6,9, "3,6,9" -> 3,6,9, "8" -> 8.
[[nodiscard]] inline std::vector<int> parse_exponent_range(std::string_view s) {
  std::vector<int> out;
  if (s.find(',') != std::string_view::npos) {
    std::size_t pos = 0;
    while (pos <= s.size()) {
      const auto next = s.find(',', pos);
      const auto piece = s.substr(pos, next == std::string_view::npos ? s.size() - pos : next - pos);
      out.push_back(detail::parse_int(piece, "tolerance exponent"));
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
    return out;
  }
  const auto c1 = s.find(':');
  if (c1 == std::string_view::npos) return {detail::parse_int(s, "tolerance exponent")};
  const auto c2 = s.find(':', c1 + 1);
  const int lo = detail::parse_int(s.substr(0, c1), "tolerance exponent");
  const int hi = detail::parse_int(s.substr(c1 + 1, c2 == std::string_view::npos ? std::string_view::npos : c2 - c1 - 1),
                                   "tolerance exponent");
  const int step = c2 == std::string_view::npos ? 1 : detail::parse_int(s.substr(c2 + 1), "tolerance step");
  if (step < 1 || hi < lo) throw InvalidSpec("tolerance range must be lo:hi[:step] with lo <= hi and step >= 1");
  for (int k = lo; k <= hi; k += step) out.push_back(k);
  return out;
}

/// 10^-k, correctly rounded (strtod rather than pow).
[[nodiscard]] inline double tolerance_from_exponent(int k) {
  const std::string s = "1e-" + std::to_string(k);
  return std::strtod(s.c_str(), nullptr);
}

struct ExperimentSpec {
  std::vector<FunctionSpec> functions;
  std::vector<int> dims;
  std::vector<double> tolerances;
  std::vector<int> workers{1};
  RuleId rule = RuleId::gm;
  Backend backend = Backend::deterministic_sim;
  int repetitions = 1;
  std::uint64_t seed = 0;  // reserved: nothing is randomized yet
  std::string output_path;
  std::size_t cap = 512;
  std::size_t init_per_rank = 8;
  std::size_t max_regions = std::size_t{1} << 24;
  std::size_t max_iterations = 2000;
  std::size_t delivery_delay = 1;

  void validate() const {
    if (functions.empty()) throw InvalidSpec("no functions");
    if (dims.empty()) throw InvalidSpec("no dimensions");
    if (tolerances.empty()) throw InvalidSpec("no tolerances");
    if (workers.empty()) throw InvalidSpec("no worker counts");
    for (int d : dims) {
      if (d < 1) throw InvalidSpec("dimension must be >= 1");
    }
    for (double t : tolerances) {
      if (!(t > 0.0) || !std::isfinite(t)) throw InvalidSpec("tolerances must be positive and finite");
    }
    for (int p : workers) {
      if (p < 1) throw InvalidSpec("worker count must be >= 1");
    }
    if (repetitions < 1) throw InvalidSpec("repetitions must be >= 1");
    if (cap < 1) throw InvalidSpec("cap must be >= 1");
    if (init_per_rank < 1) throw InvalidSpec("init-per-rank must be >= 1");
    if (max_regions < 1) throw InvalidSpec("max-regions must be >= 1");
    if (max_iterations < 1) throw InvalidSpec("max-iterations must be >= 1");
    if (delivery_delay < 1) throw InvalidSpec("delivery delay must be >= 1");
  }
};

/// Everything needed to rerun one row.
struct RunConfig {
  std::string function;
  FunctionId id = FunctionId::f1;
  double peak_center = 0.5;
  int dim = 1;
  double tau_rel = 1e-6;
  RuleId rule = RuleId::gm;
  Backend backend = Backend::deterministic_sim;
  int workers = 1;
  std::size_t cap = 512;
  std::size_t init_per_rank = 8;
  std::size_t max_regions = 0;
  std::size_t max_iterations = 0;
  std::size_t delivery_delay = 1;
  std::uint64_t seed = 0;
  int repetition = 0;
};

struct RunOutcome {
  RunConfig config;
  bool supported = true;
  std::string unsupported_reason;
  DistributedResult run;
  double reference = 0.0;
};

[[nodiscard]] inline bool is_guard(Termination t) noexcept { return t != Termination::tolerance; }

/// One run of the engine for a fully specified configuration. Infeasible
/// rule/dimension/worker combinations come back with supported = false.
[[nodiscard]] inline RunOutcome run_configuration(const RunConfig& rc) {
  RunOutcome out;
  out.config = rc;
  if (rc.rule == RuleId::gk_tensor && rc.dim > kGaussKronrodMaxDim) {
    out.supported = false;
    out.unsupported_reason = "gk-tensor capped at d <= " + std::to_string(kGaussKronrodMaxDim);
    return out;
  }
  if (rc.rule == RuleId::gk_tensor && rc.workers > 1) {
    out.supported = false;
    out.unsupported_reason = "gk-tensor is single-worker only";
    return out;
  }
  if (rc.rule == RuleId::gm && rc.dim > kGenzMalikMaxDim) {
    out.supported = false;
    out.unsupported_reason = "gm capped at d <= " + std::to_string(kGenzMalikMaxDim);
    return out;
  }
  const auto integrand = make_integrand(rc.id, rc.dim, rc.peak_center);
  out.reference = integrand.reference_value;
  DriverConfig cfg;
  cfg.tau_rel = rc.tau_rel;
  cfg.rule = rc.rule;
  cfg.max_regions = rc.max_regions;
  cfg.max_iterations = rc.max_iterations;
  RedistributionConfig rcfg;
  rcfg.cap = rc.cap;
  rcfg.initial_subdomains_per_rank = rc.init_per_rank;
  EngineOptions opts;
  opts.backend = rc.backend;
  opts.sim.delivery_delay = rc.delivery_delay;
  out.run = run_distributed(integrand.evaluate, HyperRect::unit_cube(rc.dim), cfg, rcfg, rc.workers, opts);
  return out;
}

/// Expands the sweep axes in a fixed order: function, d, tau, P, repetition.
[[nodiscard]] inline std::vector<RunConfig> expand(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<RunConfig> out;
  for (const auto& f : spec.functions) {
    for (int d : spec.dims) {
      for (double tau : spec.tolerances) {
        for (int p : spec.workers) {
          for (int rep = 0; rep < spec.repetitions; ++rep) {
            RunConfig rc;
            rc.function = f.label;
            rc.id = f.id;
            rc.peak_center = f.peak_center;
            rc.dim = d;
            rc.tau_rel = tau;
            rc.rule = spec.rule;
            rc.backend = spec.backend;
            rc.workers = p;
            rc.cap = spec.cap;
            rc.init_per_rank = spec.init_per_rank;
            rc.max_regions = spec.max_regions;
            rc.max_iterations = spec.max_iterations;
            rc.delivery_delay = spec.delivery_delay;
            rc.seed = spec.seed;
            rc.repetition = rep;
            out.push_back(rc);
          }
        }
      }
    }
  }
  return out;
}

struct AccuracyRow {
  RunConfig config;
  bool supported = true;
  double integral = 0.0;
  double error = 0.0;
  double reference = 0.0;
  double rel_error = 0.0;
  std::size_t iterations = 0;
  std::size_t f_evals = 0;
  double time = 0.0;
  std::string termination;
};

struct ScalingRow {
  RunConfig config;
  bool supported = true;
  double time = 0.0;
  std::size_t iterations = 0;
  std::size_t f_evals = 0;
  std::size_t regions_transferred = 0;
  std::size_t messages = 0;
  std::size_t largest_batch = 0;
  double integral = 0.0;
  double error = 0.0;
  std::string termination;
};

struct IdleRow {
  RunConfig config;
  bool supported = true;
  TimeBreakdown times;
  std::string termination;
};

inline const std::string kUnsupported = "unsupported";

[[nodiscard]] inline AccuracyRow accuracy_row(const RunOutcome& o) {
  AccuracyRow row;
  row.config = o.config;
  row.supported = o.supported;
  if (!o.supported) {
    row.termination = kUnsupported;
    return row;
  }
  const auto& r = o.run.result;
  row.integral = r.integral;
  row.error = r.error;
  row.reference = o.reference;
  row.rel_error = std::fabs(r.integral - o.reference) / std::fabs(o.reference);
  row.iterations = r.iterations;
  row.f_evals = r.total_f_evals;
  row.time = o.run.elapsed;
  row.termination = to_string(r.termination);
  return row;
}

[[nodiscard]] inline ScalingRow scaling_row(const RunOutcome& o) {
  ScalingRow row;
  row.config = o.config;
  row.supported = o.supported;
  if (!o.supported) {
    row.termination = kUnsupported;
    return row;
  }
  const auto& r = o.run.result;
  row.time = o.run.elapsed;
  row.iterations = r.iterations;
  row.f_evals = r.total_f_evals;
  row.regions_transferred = o.run.regions_transferred;
  row.messages = o.run.messages;
  row.largest_batch = o.run.largest_batch;
  row.integral = r.integral;
  row.error = r.error;
  row.termination = to_string(r.termination);
  return row;
}

[[nodiscard]] inline std::vector<IdleRow> idle_rows(const RunOutcome& o) {
  std::vector<IdleRow> rows;
  if (!o.supported) {
    IdleRow row;
    row.config = o.config;
    row.supported = false;
    row.termination = kUnsupported;
    rows.push_back(row);
    return rows;
  }
  for (const auto& t : o.run.workers) {
    IdleRow row;
    row.config = o.config;
    row.times = t;
    row.termination = to_string(o.run.result.termination);
    rows.push_back(row);
  }
  return rows;
}

[[nodiscard]] inline std::vector<AccuracyRow> run_accuracy_sweep(const ExperimentSpec& spec) {
  std::vector<AccuracyRow> rows;
  for (const auto& rc : expand(spec)) rows.push_back(accuracy_row(run_configuration(rc)));
  return rows;
}

[[nodiscard]] inline std::vector<ScalingRow> run_scaling_sweep(const ExperimentSpec& spec) {
  std::vector<ScalingRow> rows;
  for (const auto& rc : expand(spec)) rows.push_back(scaling_row(run_configuration(rc)));
  return rows;
}

[[nodiscard]] inline std::vector<IdleRow> run_idle_breakdown(const ExperimentSpec& spec) {
  std::vector<IdleRow> rows;
  for (const auto& rc : expand(spec)) {
    for (auto& r : idle_rows(run_configuration(rc))) rows.push_back(std::move(r));
  }
  return rows;
}

// CSV. Numbers use the shortest representation that round-trips, so equal
// results print identically.

namespace csv {

inline std::string num(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, p) : std::string("nan");
}

inline std::string num(std::size_t v) { return std::to_string(v); }

inline std::string time_unit(Backend b) { return b == Backend::deterministic_sim ? "virtual" : "seconds"; }

inline const char* kConfigHeader =
    "function,d,tau_rel,rule,backend,workers,cap,init_per_rank,max_regions,max_iterations,delivery_delay,seed,repetition";

inline std::string config_cells(const RunConfig& c) {
  return c.function + "," + std::to_string(c.dim) + "," + num(c.tau_rel) + "," + to_string(c.rule) + "," +
         to_string(c.backend) + "," + std::to_string(c.workers) + "," + num(c.cap) + "," + num(c.init_per_rank) + "," +
         num(c.max_regions) + "," + num(c.max_iterations) + "," + num(c.delivery_delay) + "," + std::to_string(c.seed) +
         "," + std::to_string(c.repetition);
}

}  // namespace csv

inline const std::string kAccuracyHeader =
    std::string(csv::kConfigHeader) +
    ",integral,error,reference,rel_error,iterations,f_evals,time,time_unit,termination_reason";
inline const std::string kScalingHeader =
    std::string(csv::kConfigHeader) +
    ",time,time_unit,iterations,f_evals,regions_transferred,messages,largest_batch,integral,error,termination_reason";
inline const std::string kIdleHeader =
    std::string(csv::kConfigHeader) +
    ",rank,iterations,compute,idle,bookkeeping,compute_fraction,idle_fraction,messages_out,regions_out,messages_in,"
    "regions_in,time_unit,termination_reason";

inline void write_csv(std::ostream& os, std::span<const AccuracyRow> rows) {
  os << kAccuracyHeader << '\n';
  for (const auto& r : rows) {
    os << csv::config_cells(r.config) << ',';
    if (r.supported) {
      os << csv::num(r.integral) << ',' << csv::num(r.error) << ',' << csv::num(r.reference) << ','
         << csv::num(r.rel_error) << ',' << r.iterations << ',' << r.f_evals << ',' << csv::num(r.time) << ','
         << csv::time_unit(r.config.backend);
    } else {
      os << ",,,,,,,";
    }
    os << ',' << r.termination << '\n';
  }
}

inline void write_csv(std::ostream& os, std::span<const ScalingRow> rows) {
  os << kScalingHeader << '\n';
  for (const auto& r : rows) {
    os << csv::config_cells(r.config) << ',';
    if (r.supported) {
      os << csv::num(r.time) << ',' << csv::time_unit(r.config.backend) << ',' << r.iterations << ',' << r.f_evals << ','
         << r.regions_transferred << ',' << r.messages << ',' << r.largest_batch << ',' << csv::num(r.integral) << ','
         << csv::num(r.error);
    } else {
      os << ",,,,,,,,";
    }
    os << ',' << r.termination << '\n';
  }
}

inline void write_csv(std::ostream& os, std::span<const IdleRow> rows) {
  os << kIdleHeader << '\n';
  for (const auto& r : rows) {
    os << csv::config_cells(r.config) << ',';
    if (r.supported) {
      const auto& t = r.times;
      os << t.rank << ',' << t.iterations << ',' << csv::num(t.compute) << ',' << csv::num(t.idle) << ','
         << csv::num(t.bookkeeping) << ',' << csv::num(t.compute_fraction()) << ',' << csv::num(t.idle_fraction()) << ','
         << t.messages_out << ',' << t.regions_out << ',' << t.messages_in << ',' << t.regions_in << ','
         << csv::time_unit(r.config.backend);
    } else {
      os << ",,,,,,,,,,,";
    }
    os << ',' << r.termination << '\n';
  }
}

enum class Experiment { accuracy, scaling, idle };

[[nodiscard]] inline std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::accuracy:
      return "accuracy";
    case Experiment::scaling:
      return "scaling";
    case Experiment::idle:
      return "idle";
  }
  return "?";
}

struct ExperimentSummary {
  std::size_t rows = 0;
  std::size_t runs = 0;
  std::size_t guard_terminations = 0;
  std::size_t unsupported = 0;
};

/// Runs one sweep and writes its CSV to `os`.
inline ExperimentSummary run_experiment(Experiment kind, const ExperimentSpec& spec, std::ostream& os) {
  ExperimentSummary s;
  auto tally = [&](const std::string& termination, bool supported) {
    ++s.runs;
    if (!supported) {
      ++s.unsupported;
    } else if (termination != "tolerance") {
      ++s.guard_terminations;
    }
  };
  switch (kind) {
    case Experiment::accuracy: {
      const auto rows = run_accuracy_sweep(spec);
      for (const auto& r : rows) tally(r.termination, r.supported);
      s.rows = rows.size();
      write_csv(os, std::span<const AccuracyRow>(rows));
      break;
    }
    case Experiment::scaling: {
      const auto rows = run_scaling_sweep(spec);
      for (const auto& r : rows) tally(r.termination, r.supported);
      s.rows = rows.size();
      write_csv(os, std::span<const ScalingRow>(rows));
      break;
    }
    case Experiment::idle: {
      const auto rows = run_idle_breakdown(spec);
      for (const auto& r : rows) {
        if (r.times.rank == 0) tally(r.termination, r.supported);
      }
      s.rows = rows.size();
      write_csv(os, std::span<const IdleRow>(rows));
      break;
    }
  }
  return s;
}

}  // namespace dquad
