#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "dquad/bench.hpp"
#include "dquad/manifest.hpp"

namespace {

dquad::ExperimentSpec spec_for(const std::string& fn, std::vector<int> dims, std::vector<double> taus,
                               std::vector<int> workers = {1}) {
  dquad::ExperimentSpec s;
  s.functions.push_back(*dquad::parse_function(fn));
  s.dims = std::move(dims);
  s.tolerances = std::move(taus);
  s.workers = std::move(workers);
  return s;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t columns(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

}  // namespace

TEST(ParseExponentRange, Forms) {
  EXPECT_EQ(dquad::parse_exponent_range("3:9"), (std::vector<int>{3, 4, 5, 6, 7, 8, 9}));
  EXPECT_EQ(dquad::parse_exponent_range("3:9:3"), (std::vector<int>{3, 6, 9}));
  EXPECT_EQ(dquad::parse_exponent_range("3,6,9"), (std::vector<int>{3, 6, 9}));
  EXPECT_EQ(dquad::parse_exponent_range("8"), (std::vector<int>{8}));
  for (const char* bad : {"", "x", "9:3", "3:9:0", "3,,6", "3:"}) {
    EXPECT_THROW((void)dquad::parse_exponent_range(bad), dquad::InvalidSpec) << bad;
  }
  EXPECT_EQ(dquad::tolerance_from_exponent(6), 1e-6);
  EXPECT_EQ(dquad::tolerance_from_exponent(9), 1e-9);
}

TEST(ParseNames, RuleAndBackend) {
  EXPECT_EQ(dquad::parse_rule("gm"), dquad::RuleId::gm);
  EXPECT_EQ(dquad::parse_rule("gk-tensor"), dquad::RuleId::gk_tensor);
  EXPECT_FALSE(dquad::parse_rule("simpson").has_value());
  EXPECT_EQ(dquad::parse_backend("deterministic_sim"), dquad::Backend::deterministic_sim);
  EXPECT_EQ(dquad::parse_backend("concurrent"), dquad::Backend::concurrent);
  EXPECT_FALSE(dquad::parse_backend("mpi").has_value());
}

TEST(ExperimentSpec, Validation) {
  auto s = spec_for("f1", {2}, {1e-6});
  EXPECT_NO_THROW(s.validate());
  auto e = s;
  e.functions.clear();
  EXPECT_THROW(e.validate(), dquad::InvalidSpec);
  e = s;
  e.tolerances = {0.0};
  EXPECT_THROW(e.validate(), dquad::InvalidSpec);
  e = s;
  e.workers = {0};
  EXPECT_THROW(e.validate(), dquad::InvalidSpec);
  e = s;
  e.dims = {};
  EXPECT_THROW(e.validate(), dquad::InvalidSpec);
  e = s;
  e.cap = 0;
  EXPECT_THROW(e.validate(), dquad::InvalidSpec);
}

TEST(Expand, AxisOrder) {
  auto s = spec_for("f1", {2, 3}, {1e-3, 1e-6}, {1, 2});
  s.functions.push_back(*dquad::parse_function("f2-corner"));
  s.repetitions = 2;
  const auto runs = dquad::expand(s);
  ASSERT_EQ(runs.size(), 2u * 2 * 2 * 2 * 2);
  EXPECT_EQ(runs[0].function, "f1");
  EXPECT_EQ(runs[0].dim, 2);
  EXPECT_EQ(runs[0].tau_rel, 1e-3);
  EXPECT_EQ(runs[0].workers, 1);
  EXPECT_EQ(runs[1].repetition, 1);
  EXPECT_EQ(runs[2].workers, 2);
  EXPECT_EQ(runs[4].tau_rel, 1e-6);
  EXPECT_EQ(runs[8].dim, 3);
  EXPECT_EQ(runs[16].function, "f2-corner");
  EXPECT_EQ(runs[16].peak_center, 0.25);
}

TEST(AccuracySweep, CornerPeakOneDim) {
  const auto rows = dquad::run_accuracy_sweep(spec_for("f3", {1}, {1e-8}));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].termination, "tolerance");
  EXPECT_LE(rows[0].rel_error, 1e-7);
  EXPECT_EQ(rows[0].reference, 0.5);
}

TEST(AccuracySweep, GaussianConverges) {
  const auto rows = dquad::run_accuracy_sweep(spec_for("f4", {2}, {1e-4}));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].termination, "tolerance");
  EXPECT_LE(rows[0].rel_error, 1e-3);
  EXPECT_GT(rows[0].f_evals, 0u);
}

TEST(AccuracySweep, UnsupportedCombinationsBecomeRows) {
  auto s = spec_for("f1", {7}, {1e-3});
  s.rule = dquad::RuleId::gk_tensor;
  std::ostringstream out;
  const auto summary = dquad::run_experiment(dquad::Experiment::accuracy, s, out);
  EXPECT_EQ(summary.unsupported, 1u);
  EXPECT_EQ(summary.rows, 1u);
  const auto ls = lines(out.str());
  ASSERT_EQ(ls.size(), 2u);
  EXPECT_EQ(columns(ls[1]), columns(ls[0]));
  EXPECT_NE(ls[1].find(",unsupported"), std::string::npos);

  dquad::RunConfig rc;
  rc.id = dquad::FunctionId::f1;
  rc.dim = 2;
  rc.rule = dquad::RuleId::gk_tensor;
  rc.workers = 2;
  rc.max_regions = 1024;
  rc.max_iterations = 10;
  EXPECT_FALSE(dquad::run_configuration(rc).supported);
  rc.rule = dquad::RuleId::gm;
  rc.dim = 14;
  EXPECT_FALSE(dquad::run_configuration(rc).supported);
}

TEST(CsvFormat, HeadersAndColumnCounts) {
  auto s = spec_for("f1", {2}, {1e-4}, {1, 2});
  for (auto kind : {dquad::Experiment::accuracy, dquad::Experiment::scaling, dquad::Experiment::idle}) {
    std::ostringstream out;
    const auto summary = dquad::run_experiment(kind, s, out);
    const auto ls = lines(out.str());
    ASSERT_EQ(ls.size(), summary.rows + 1);
    EXPECT_EQ(summary.runs, 2u);
    for (const auto& l : ls) EXPECT_EQ(columns(l), columns(ls[0])) << l;
  }
  EXPECT_EQ(dquad::kAccuracyHeader.substr(0, 12), "function,d,t");
  EXPECT_NE(dquad::kAccuracyHeader.find("termination_reason"), std::string::npos);
  EXPECT_NE(dquad::kScalingHeader.find("regions_transferred"), std::string::npos);
  EXPECT_NE(dquad::kIdleHeader.find("idle_fraction"), std::string::npos);
}

TEST(CsvFormat, ByteIdenticalReruns) {
  auto s = spec_for("f2-corner", {3}, {1e-5}, {1, 4});
  s.functions.push_back(*dquad::parse_function("f5"));
  for (auto kind : {dquad::Experiment::accuracy, dquad::Experiment::scaling, dquad::Experiment::idle}) {
    std::ostringstream a;
    std::ostringstream b;
    (void)dquad::run_experiment(kind, s, a);
    (void)dquad::run_experiment(kind, s, b);
    EXPECT_EQ(a.str(), b.str()) << dquad::to_string(kind);
  }
}

TEST(ScalingSweep, SingleWorkerRowMatchesDirectRun) {
  const auto rows = dquad::run_scaling_sweep(spec_for("f4", {3}, {1e-6}, {1}));
  ASSERT_EQ(rows.size(), 1u);
  dquad::DriverConfig cfg;
  cfg.tau_rel = 1e-6;
  const auto direct = dquad::run_distributed(dquad::SuiteFunction{dquad::FunctionId::f4, 3, 0.5},
                                             dquad::HyperRect::unit_cube(3), cfg, {}, 1);
  EXPECT_EQ(rows[0].iterations, direct.result.iterations);
  EXPECT_EQ(rows[0].f_evals, direct.result.total_f_evals);
  EXPECT_EQ(rows[0].integral, direct.result.integral);
  EXPECT_EQ(rows[0].time, direct.elapsed);
  EXPECT_EQ(rows[0].messages, 0u);
}

TEST(ScalingSweep, MessagesBoundTransferredRegions) {
  const auto rows = dquad::run_scaling_sweep(spec_for("f2-corner", {3}, {1e-6}, {2, 4, 8}));
  for (const auto& r : rows) {
    EXPECT_LE(r.regions_transferred, r.messages * 512) << "P=" << r.config.workers;
    EXPECT_LE(r.largest_batch, 512u);
  }
}

TEST(ScalingSweep, MoreWorkersTakeLessVirtualTime) {
  auto s = spec_for("f2", {3}, {1e-8}, {1, 2, 4});
  const auto rows = dquad::run_scaling_sweep(s);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) ASSERT_EQ(r.termination, "tolerance") << "P=" << r.config.workers;
  EXPECT_LE(rows[1].time, rows[0].time);
  EXPECT_LE(rows[2].time, rows[1].time);
}

TEST(IdleBreakdown, SingleWorkerIsNeverIdle) {
  const auto rows = dquad::run_idle_breakdown(spec_for("f4", {2}, {1e-6}));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_LE(rows[0].times.idle_fraction(), 0.01);
}

TEST(IdleBreakdown, FractionsAreConsistent) {
  const auto rows = dquad::run_idle_breakdown(spec_for("f2-corner", {3}, {1e-6}, {4}));
  ASSERT_EQ(rows.size(), 4u);
  double lo = 1.0;
  double hi = 0.0;
  for (const auto& r : rows) {
    const auto& t = r.times;
    EXPECT_LE(t.compute_fraction() + t.idle_fraction(), 1.0 + 1e-12);
    EXPECT_GE(t.compute_fraction() + t.idle_fraction(), 0.95);
    lo = std::min(lo, t.idle_fraction());
    hi = std::max(hi, t.idle_fraction());
  }
  EXPECT_GT(hi, lo);
}

TEST(Manifest, RecordsSpecAndCounts) {
  auto s = spec_for("f1", {2}, {1e-4}, {1, 2});
  s.output_path = "out/acc.csv";
  std::ostringstream out;
  const auto summary = dquad::run_experiment(dquad::Experiment::accuracy, s, out);
  const auto m = dquad::make_manifest(dquad::Experiment::accuracy, s, summary, "2026-01-31T12:00:00Z");
  EXPECT_EQ(m["experiment"], "accuracy");
  EXPECT_EQ(m["engine_version"], dquad::kVersion);
  EXPECT_EQ(m["backend"], "deterministic_sim");
  EXPECT_EQ(m["timestamp"], "2026-01-31T12:00:00Z");
  EXPECT_EQ(m["rows"], 2);
  EXPECT_EQ(m["spec"]["functions"][0], "f1");
  EXPECT_EQ(m["spec"]["workers"], nlohmann::json::array({1, 2}));
  EXPECT_EQ(m["spec"]["cap"], 512);
  EXPECT_EQ(m["spec"]["tolerances"][0].get<double>(), 1e-4);
  EXPECT_EQ(dquad::manifest_path_for("out/acc.csv"), "out/acc.manifest.json");
  EXPECT_EQ(dquad::manifest_path_for("results"), "results.manifest.json");
  const auto ts = dquad::iso8601_utc(std::chrono::system_clock::time_point{});
  EXPECT_EQ(ts, "1970-01-01T00:00:00Z");
}
