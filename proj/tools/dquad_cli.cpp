// dquad: one-shot integration and the accuracy / scaling / idle sweeps.
//
//   dquad integrate --function f2 --dim 3 --tol-exp-range 6 --workers 4
//   dquad accuracy  --function f1,f2,f3 --dim 1,2,3 --tol-exp-range 3:9:3 --out acc.csv
//   dquad scaling   --function f2 --dim 4 --tol-exp-range 6 --workers 1,2,4,8 --out scal.csv
//   dquad idle      --function f2-corner --dim 4 --tol-exp-range 6 --workers 8 --out idle.csv
//
// Exit codes: 0 ok, 2 invalid spec, 3 a run stopped on a guard and --strict was given.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dquad/dquad.hpp"
#include "dquad/manifest.hpp"

namespace {

constexpr int kExitInvalidSpec = 2;
constexpr int kExitGuard = 3;

struct Options {
  std::vector<std::string> functions{"f1"};
  std::vector<int> dims{2};
  std::string tol_exp_range = "6";
  std::vector<int> workers{1};
  std::string rule = "gm";
  std::string backend = "deterministic_sim";
  std::size_t cap = 512;
  std::size_t init_per_rank = 8;
  std::size_t max_regions = std::size_t{1} << 24;
  std::size_t max_iterations = 2000;
  std::size_t delay = 1;
  int repetitions = 1;
  std::uint64_t seed = 0;
  std::string out;
  bool strict = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--function", o.functions, "f1..f7 or f2-corner, comma separated")->delimiter(',');
  cmd->add_option("--dim", o.dims, "dimensions, comma separated")->delimiter(',');
  cmd->add_option("--tol-exp-range", o.tol_exp_range, "tau = 10^-k for k in lo:hi[:step] or a,b,c");
  cmd->add_option("--workers", o.workers, "worker counts, comma separated")->delimiter(',');
  cmd->add_option("--rule", o.rule, "gm | gk-tensor");
  cmd->add_option("--backend", o.backend, "deterministic_sim | concurrent");
  cmd->add_option("--cap", o.cap, "max regions per transfer message");
  cmd->add_option("--init-per-rank", o.init_per_rank, "initial subdomains per worker");
  cmd->add_option("--max-regions", o.max_regions, "per-worker region cap");
  cmd->add_option("--max-iterations", o.max_iterations, "iteration cap");
  cmd->add_option("--delay", o.delay, "simulated delivery delay in iterations");
  cmd->add_option("--repetitions", o.repetitions, "runs per configuration");
  cmd->add_option("--seed", o.seed, "reserved");
  cmd->add_option("--out", o.out, "CSV path (manifest goes next to it)");
  cmd->add_flag("--strict", o.strict, "exit 3 if any run stops on a guard");
}

dquad::ExperimentSpec to_spec(const Options& o) {
  dquad::ExperimentSpec spec;
  for (const auto& f : o.functions) {
    auto parsed = dquad::parse_function(f);
    if (!parsed) throw dquad::InvalidSpec("unknown function '" + f + "'");
    spec.functions.push_back(*parsed);
  }
  spec.dims = o.dims;
  for (int k : dquad::parse_exponent_range(o.tol_exp_range)) spec.tolerances.push_back(dquad::tolerance_from_exponent(k));
  spec.workers = o.workers;
  auto rule = dquad::parse_rule(o.rule);
  if (!rule) throw dquad::InvalidSpec("unknown rule '" + o.rule + "'");
  spec.rule = *rule;
  auto backend = dquad::parse_backend(o.backend);
  if (!backend) throw dquad::InvalidSpec("unknown backend '" + o.backend + "'");
  spec.backend = *backend;
  spec.cap = o.cap;
  spec.init_per_rank = o.init_per_rank;
  spec.max_regions = o.max_regions;
  spec.max_iterations = o.max_iterations;
  spec.delivery_delay = o.delay;
  spec.repetitions = o.repetitions;
  spec.seed = o.seed;
  spec.output_path = o.out;
  spec.validate();
  return spec;
}

int run_integrate(const dquad::ExperimentSpec& spec, bool strict) {
  int guards = 0;
  for (const auto& rc : dquad::expand(spec)) {
    const auto o = dquad::run_configuration(rc);
    const auto row = dquad::accuracy_row(o);
    std::printf("%s d=%d tau=%g P=%d rule=%s: ", rc.function.c_str(), rc.dim, rc.tau_rel, rc.workers,
                dquad::to_string(rc.rule).c_str());
    if (!row.supported) {
      std::printf("unsupported (%s)\n", o.unsupported_reason.c_str());
      continue;
    }
    std::printf("I=%.17g eps=%.3g rel_error=%.3g iterations=%zu f_evals=%zu termination=%s\n", row.integral, row.error,
                row.rel_error, row.iterations, row.f_evals, row.termination.c_str());
    if (rc.workers > 1) {
      for (const auto& t : o.run.workers) {
        std::printf("  rank %d compute=%.3f idle=%.3f messages_out=%zu regions_out=%zu\n", t.rank, t.compute_fraction(),
                    t.idle_fraction(), t.messages_out, t.regions_out);
      }
    }
    if (row.termination != "tolerance") ++guards;
  }
  return strict && guards > 0 ? kExitGuard : 0;
}

int run_sweep(dquad::Experiment kind, dquad::ExperimentSpec spec, bool strict) {
  if (spec.output_path.empty()) spec.output_path = dquad::to_string(kind) + ".csv";
  std::ofstream csv(spec.output_path, std::ios::binary);
  if (!csv) {
    std::cerr << "cannot write " << spec.output_path << '\n';
    return kExitInvalidSpec;
  }
  const auto summary = dquad::run_experiment(kind, spec, csv);
  csv.close();
  const auto manifest_path = dquad::manifest_path_for(spec.output_path);
  std::ofstream(manifest_path) << dquad::make_manifest(kind, spec, summary,
                                                      dquad::iso8601_utc(std::chrono::system_clock::now()))
                                      .dump(2)
                               << '\n';
  std::cerr << summary.rows << " rows -> " << spec.output_path << " (" << summary.guard_terminations
            << " guard terminations, " << summary.unsupported << " unsupported); manifest " << manifest_path << '\n';
  return strict && summary.guard_terminations > 0 ? kExitGuard : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed adaptive cubature harness"};
  app.require_subcommand(1);
  Options o;
  auto* integrate = app.add_subcommand("integrate", "integrate and print the result");
  auto* accuracy = app.add_subcommand("accuracy", "error vs tolerance sweep");
  auto* scaling = app.add_subcommand("scaling", "time vs worker count sweep");
  auto* idle = app.add_subcommand("idle", "per-rank compute/idle breakdown");
  for (auto* c : {integrate, accuracy, scaling, idle}) add_common(c, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalidSpec;
  }

  dquad::ExperimentSpec spec;
  try {
    spec = to_spec(o);
  } catch (const dquad::ContractViolation& e) {
    std::cerr << "invalid spec: " << e.what() << '\n';
    return kExitInvalidSpec;
  }

  try {
    if (integrate->parsed()) return run_integrate(spec, o.strict);
    if (accuracy->parsed()) return run_sweep(dquad::Experiment::accuracy, spec, o.strict);
    if (scaling->parsed()) return run_sweep(dquad::Experiment::scaling, spec, o.strict);
    return run_sweep(dquad::Experiment::idle, spec, o.strict);
  } catch (const dquad::ContractViolation& e) {
    std::cerr << "invalid spec: " << e.what() << '\n';
    return kExitInvalidSpec;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
