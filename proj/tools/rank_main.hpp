#pragma once

// Shared driver for the producer, consumer and infer binaries: flag parsing,
// client setup from the environment, exit-code mapping and CSV output.

#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "isf/client.hpp"
#include "isf/exec.hpp"
#include "isf/plan.hpp"
#include "isf/reproducers.hpp"

namespace isf::tools {

struct RankArgs {
  std::string spec_path;
  std::optional<std::int64_t> rank;
  std::optional<std::string> run_id;
  std::string csv;
  std::string mode;
};

inline void add_rank_flags(CLI::App& app, RankArgs& a) {
  app.add_option("--spec", a.spec_path, "workload spec JSON")->required();
  app.add_option("--rank", a.rank, "rank id (default: ISF_RANK)");
  app.add_option("--run-id", a.run_id, "run id (default: ISF_RUN_ID)");
  app.add_option("--csv", a.csv, "timing CSV output (default: <run-id>-<rank>.csv)");
  app.add_option("--mode", a.mode, "colocated or clustered (default: clustered when ISF_SHARD_MAP is set)");
}

inline ClientConfig client_config(const RankArgs& a) {
  ClientConfig c;
  if (!a.mode.empty()) {
    c.mode = deployment_mode_from_string(a.mode);
  } else {
    const char* map = std::getenv(kShardMapEnv);
    c.mode = map && *map ? DeploymentMode::Clustered : DeploymentMode::Colocated;
  }
  return c;
}

/// Runs `body` with typed error mapping. The sink is written out on every path.
inline int run_rank(const char* name, const RankArgs& a,
                    const std::function<int(const WorkloadSpec&, const RankContext&, TimingSink&)>& body) {
  std::optional<TimingSink> sink;
  auto flush_csv = [&] {
    if (!sink) return;
    const std::string path =
        a.csv.empty() ? sink->run_id() + "-" + std::to_string(sink->rank()) + ".csv" : a.csv;
    try {
      sink->write_csv(std::filesystem::path(path));
    } catch (const std::exception& e) {
      std::cerr << name << ": " << e.what() << "\n";
    }
  };
  int code = kExitOk;
  try {
    const WorkloadSpec spec = workload_from_file(a.spec_path);
    const RankContext ctx = rank_context_from_env(a.run_id, a.rank);
    sink.emplace(ctx.run_id, ctx.rank);
    code = body(spec, ctx, *sink);
  } catch (const PlanError& e) {
    std::cerr << name << ": config error: " << e.what() << "\n";
    code = kExitConfig;
  } catch (const ModelParseError& e) {
    std::cerr << name << ": config error: " << e.what() << "\n";
    code = kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << name << ": config error: " << e.what() << "\n";
    code = kExitConfig;
  } catch (const DataMissingError& e) {
    std::cerr << name << ": data missing: " << e.what() << "\n";
    code = kExitDataMissing;
  } catch (const ClientError& e) {
    std::cerr << name << ": store error: " << e.what() << "\n";
    code = kExitStore;
  } catch (const Error& e) {
    std::cerr << name << ": store error: " << e.what() << "\n";
    code = kExitStore;
  } catch (const std::exception& e) {
    std::cerr << name << ": " << e.what() << "\n";
    code = kExitStore;
  }
  flush_csv();
  return code;
}

}  // namespace isf::tools
