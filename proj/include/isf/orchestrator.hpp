#pragma once

// Launches a DeploymentPlan as local processes: stores first (each must print
// READY), then producer and consumer ranks with discovery variables injected.
// Every child gets its own process group so teardown can signal whole trees.
//
// Artifact layout under the output directory:
//   manifest.json        plan, process table, final statuses
//   workload.json        the spec handed to every rank
//   logs/<role>-<node>-<rank>.log
//   csv/<role>-<rank>.csv
//   timings.csv          merged per-rank CSVs

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "isf/plan.hpp"
#include "json.hpp"

namespace isf {

class LaunchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProcessEntry {
  std::string role;  // store, producer, consumer
  std::uint32_t node = 0;
  std::int64_t rank = 0;  // store index for stores
  pid_t pid = -1;
  bool reaped = false;
  std::string status = "running";  // running, ok, failed, killed
  int exit_code = -1;
  int term_signal = 0;
  std::vector<std::string> argv;
  std::map<std::string, std::string> env;  // injected ISF_* variables only
  std::filesystem::path log;
  std::filesystem::path csv;
  std::string address;  // stores only
};

struct RunManifest {
  std::string run_id;
  DeploymentPlan plan;
  std::filesystem::path artifact_dir;
  std::vector<ProcessEntry> processes;
  std::int64_t start_at_ms = 0;
  bool affinity_applied = false;

  std::vector<const ProcessEntry*> with_role(std::string_view role) const;
  nlohmann::json to_json() const;
  void write() const;
};

struct LaunchOptions {
  /// Directory holding store, producer, consumer and infer.
  std::filesystem::path bin_dir;
  /// Generated when empty.
  std::string run_id;
  std::chrono::milliseconds ready_timeout{10000};
  /// Lead time between the last spawn decision and step 0; 0 picks one from the rank count.
  std::chrono::milliseconds start_delay{0};
};

/// Validates executables, spawns stores, waits for READY, spawns ranks and
/// writes manifest.json. On any failure every spawned child is terminated
/// and LaunchError is thrown.
RunManifest launch(const DeploymentPlan& plan, const std::filesystem::path& out, const LaunchOptions& opts);

struct RunSummary {
  bool ok = false;
  std::size_t clients_failed = 0;
  std::size_t killed = 0;
  std::size_t stores_failed = 0;
  bool timed_out = false;
  std::size_t merged_rows = 0;
  std::filesystem::path timings_csv;
  std::string hook_error;
};

/// Runs after all ranks exit and before stores are terminated.
using InspectHook = std::function<void(const RunManifest&)>;

/// Reaps ranks (killing the tree on timeout), runs the hook, stops stores
/// last, merges CSVs and rewrites manifest.json with final statuses.
RunSummary await_completion(RunManifest& manifest, std::chrono::milliseconds timeout, const InspectHook& hook = {});

/// Pids from the manifest, or members of their process groups, that still exist.
std::vector<pid_t> surviving_processes(const RunManifest& manifest);

/// Async-signal-safe; makes launch/await abort and tear everything down.
void request_stop() noexcept;
void clear_stop() noexcept;

/// Reasonable default wall-clock budget for a plan.
std::chrono::milliseconds default_timeout(const DeploymentPlan& plan);

/// Run id from the clock and pid, e.g. "r20261016-104512-1234".
std::string make_run_id();

}  // namespace isf
