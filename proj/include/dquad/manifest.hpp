#pragma once

#include <chrono>
#include <ctime>
#include <string>

#include "dquad/bench.hpp"
#include "dquad/version.hpp"
#include "json.hpp"

namespace dquad {

/// UTC, second resolution: 2026-01-31T12:00:00Z.
[[nodiscard]] inline std::string iso8601_utc(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

[[nodiscard]] inline nlohmann::ordered_json spec_to_json(const ExperimentSpec& spec) {
  nlohmann::ordered_json j;
  auto& fns = j["functions"] = nlohmann::ordered_json::array();
  for (const auto& f : spec.functions) fns.push_back(f.label);
  j["dims"] = spec.dims;
  j["tolerances"] = spec.tolerances;
  j["workers"] = spec.workers;
  j["rule"] = to_string(spec.rule);
  j["backend"] = to_string(spec.backend);
  j["repetitions"] = spec.repetitions;
  j["seed"] = spec.seed;
  j["output_path"] = spec.output_path;
  j["cap"] = spec.cap;
  j["init_per_rank"] = spec.init_per_rank;
  j["max_regions"] = spec.max_regions;
  j["max_iterations"] = spec.max_iterations;
  j["delivery_delay"] = spec.delivery_delay;
  return j;
}

[[nodiscard]] inline nlohmann::ordered_json make_manifest(Experiment kind, const ExperimentSpec& spec,
                                                         const ExperimentSummary& summary, const std::string& timestamp) {
  nlohmann::ordered_json j;
  j["experiment"] = to_string(kind);
  j["spec"] = spec_to_json(spec);
  j["engine_version"] = kVersion;
  j["backend"] = to_string(spec.backend);
  j["timestamp"] = timestamp;
  j["rows"] = summary.rows;
  j["runs"] = summary.runs;
  j["guard_terminations"] = summary.guard_terminations;
  j["unsupported"] = summary.unsupported;
  return j;
}

/// results.csv -> results.manifest.json; anything else gets the suffix appended.
[[nodiscard]] inline std::string manifest_path_for(const std::string& csv_path) {
  const std::string ext = ".csv";
  if (csv_path.size() > ext.size() && csv_path.compare(csv_path.size() - ext.size(), ext.size(), ext) == 0) {
    return csv_path.substr(0, csv_path.size() - ext.size()) + ".manifest.json";
  }
  return csv_path + ".manifest.json";
}

}  // namespace dquad
