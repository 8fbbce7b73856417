#pragma once

// Experiment sweeps over deployment plans. An experiment file holds a base
// plan, a list of sweep points (each a JSON merge patch over the base plan),
// the repetition count and the pass/fail thresholds used by check_properties.
//
// report.json layout:
//   id, title, x_label, thresholds,
//   points[]: label, x, series, plan, ok,
//             stats{component: OpStats}  (averaged over successful repetitions)
//             derived{throughput_mbs, efficiency, speedup: {component: value}}
//             reps[]: rep, run_id, run_dir, ok, error, orphans, manifest_exact,
//                     rows, expected_rows, locality{checked, violations}, store_keys[],
//                     stats{component: OpStats}
//   verdicts[]: name, status (PASS, FAIL, INCONCLUSIVE, FLAGGED), measured, threshold, detail

#include <cmath>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isf/orchestrator.hpp"
#include "isf/plan.hpp"
#include "isf/timings.hpp"
#include "json.hpp"

namespace isf::bench {

struct SweepPoint {
  std::string label;
  double x = 0;
  std::string series;
  nlohmann::json set = nlohmann::json::object();
};

struct ModelGen {
  std::string type = "affine";
  std::uint32_t in = 0;
  std::uint32_t out = 0;
  std::vector<std::uint32_t> hidden;
  std::uint64_t seed = 1;
};

struct ExperimentSpec {
  std::string id;
  std::string title;
  std::string x_label;
  bool log_x = false;
  bool log_y = false;
  unsigned repetitions = 1;
  nlohmann::json base_plan;
  std::vector<SweepPoint> points;
  nlohmann::json thresholds = nlohmann::json::object();
  std::optional<ModelGen> model;
  /// Components drawn in time/throughput plots.
  std::vector<std::string> components{"send", "retrieve"};
  bool paper_scale = false;

  /// Base plan with the point's patch applied; throws PlanError when invalid.
  DeploymentPlan plan_for(const SweepPoint& p) const;
};

/// Strict parse; every sweep point must expand to a valid plan. With
/// `paper_scale`, the file's "paper_scale" block (same shape) is merged
/// over base_plan/points/thresholds first; its absence is an error.
ExperimentSpec load_experiment(const std::filesystem::path& path, bool paper_scale = false);

struct Locality {
  std::int64_t checked = 0;
  std::int64_t violations = 0;
};

struct RepResult {
  unsigned rep = 0;
  std::string run_id;
  std::filesystem::path run_dir;
  bool ok = false;
  std::string error;
  std::size_t orphans = 0;
  bool manifest_exact = false;
  std::uint64_t rows = 0;
  std::uint64_t expected_rows = 0;
  Locality locality;
  std::vector<std::int64_t> store_keys;
  std::map<std::string, OpStats> stats;
};

struct PointResult {
  std::string label;
  double x = 0;
  std::string series;
  nlohmann::json plan;
  std::vector<RepResult> reps;
  bool ok = false;
  std::map<std::string, OpStats> stats;
  std::map<std::string, std::map<std::string, double>> derived;
};

struct Verdict {
  std::string name;
  std::string status;
  double measured = std::nan("");
  double threshold = std::nan("");
  std::string detail;
};

struct ScalingReport {
  std::string id;
  std::string title;
  std::string x_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<std::string> components;
  nlohmann::json thresholds;
  std::vector<PointResult> points;
  std::vector<Verdict> verdicts;

  const PointResult* find(std::string_view label) const;
  nlohmann::json to_json() const;
  static ScalingReport from_json(const nlohmann::json& j);
};

struct BenchOptions {
  std::filesystem::path bin_dir;
  /// Progress lines; null for silence.
  std::ostream* log = nullptr;
};

/// Per-component stats plus a "transfer" pseudo-component (send + retrieve rows).
std::map<std::string, OpStats> component_stats(const std::vector<CsvRow>& rows);

/// Where each producer's newest key lives, checked with EXISTS on every store.
Locality inspect_placement(const RunManifest& m, std::vector<std::int64_t>* store_keys = nullptr);

/// Rows a successful run must produce (0 when not predictable, e.g. with consumers).
std::uint64_t expected_rows(const DeploymentPlan& plan);

/// Fills point-level stats and derived metrics from the repetitions.
void finalize(ScalingReport& report);

/// Runs every sweep point sequentially, writes raw runs, report.json and plots
/// under out/<id>/, and fills verdicts.
ScalingReport run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out, const BenchOptions& opts);

std::vector<Verdict> check_properties(const ScalingReport& report, const nlohmann::json& thresholds);

/// time.svg and throughput.svg (plus components.svg for inference sweeps).
void plot_report(const ScalingReport& report, const std::filesystem::path& dir);

/// Merges every CSV under raw_dir into merged.csv (with a throughput column)
/// and draws a per-component mean latency chart. Returns the merged row count.
std::size_t merge_and_plot(const std::filesystem::path& raw_dir);

}  // namespace isf::bench
