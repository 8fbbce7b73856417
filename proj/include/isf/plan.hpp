#pragma once

// Deployment plans and workload specs. Both are strict JSON documents:
// unknown fields are errors, every violation names the offending field.
//
// Port layout:
//   colocated: one store per virtual node, node k listens on base_port + k
//   clustered: shard i listens on base_port + i on its own virtual node;
//              producer nodes follow the store nodes
// `store_ports` overrides the computed layout with an explicit list.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "isf/client.hpp"
#include "json.hpp"

namespace isf {

/// Raised for any plan/spec schema violation. what() starts with the field path.
class PlanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class WorkloadMode { Transfer, Inference, TrainFeed };

std::string_view to_string(WorkloadMode m);

struct WorkloadSpec {
  std::uint64_t payload_bytes_per_rank = 256 * 1024;
  std::uint32_t iterations = 40;
  std::uint32_t warmup = 2;
  std::uint32_t sleep_ms = 100;
  WorkloadMode mode = WorkloadMode::Transfer;
  std::uint32_t send_every = 1;
  std::optional<std::string> model_file;
  std::uint32_t batch_n = 1;
  /// Per-sample feature dims for inference inputs; empty means [model in_dim].
  std::vector<std::uint64_t> sample_shape;
  /// Inference mode only: evaluate in-process instead of through the store.
  bool inline_eval = false;
  /// Consumer: emulated training time per epoch.
  std::uint32_t train_ms = 0;
  std::uint64_t seed = 1234;
  /// Producer keeps only the newest `retain_steps` sends in the store; 0 keeps all.
  std::uint32_t retain_steps = 0;
  std::uint32_t poll_interval_ms = 10;
  std::uint32_t poll_max_tries = 1000;
  /// Steps start on a shared clock of period sleep_ms (ISF_START_AT_MS)
  /// instead of free-running sleeps.
  bool lockstep = true;
  /// Consumer: draw producer ranks at random each epoch instead of the fixed block.
  bool shuffle = false;
  bool verify = true;

  void validate() const;
  std::uint64_t total_steps() const { return std::uint64_t{warmup} + iterations; }
};

struct DeploymentPlan {
  DeploymentMode mode = DeploymentMode::Colocated;
  std::uint32_t nodes = 1;
  std::uint32_t ranks_per_node = 1;
  std::uint32_t db_cores = 1;
  std::optional<std::uint32_t> shards;
  std::uint32_t consumer_ranks_per_node = 0;
  std::string host = "127.0.0.1";
  std::uint16_t base_port = 7000;
  std::vector<std::uint16_t> store_ports;
  std::uint64_t store_max_bytes = std::uint64_t{2} << 30;
  /// Co-located only: node k's step clock starts k * sleep_ms / nodes later,
  /// so virtual nodes sharing fewer physical cores do not contend.
  bool stagger_nodes = false;
  WorkloadSpec workload;

  void validate() const;

  std::uint32_t store_count() const { return mode == DeploymentMode::Colocated ? nodes : shards.value_or(0); }
  std::uint32_t producer_count() const { return nodes * ranks_per_node; }
  std::uint32_t consumer_count() const { return nodes * consumer_ranks_per_node; }
  /// Port of store i (node i in co-located mode, shard i in clustered mode).
  std::uint16_t store_port(std::uint32_t i) const;
  std::string store_address(std::uint32_t i) const;
  ShardMap shard_map() const;
  /// Virtual node hosting producer node index k (offset past store nodes when clustered).
  std::uint32_t producer_virtual_node(std::uint32_t k) const;
  /// Producers assigned to consumer c (global consumer index).
  std::vector<std::int64_t> producers_for_consumer(std::uint32_t c) const;
};

WorkloadSpec workload_from_json(const nlohmann::json& j, const std::string& path = "workload");
nlohmann::json to_json(const WorkloadSpec& w);

DeploymentPlan plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DeploymentPlan& p);

/// Parses and validates a plan file.
DeploymentPlan plan_from_file(const std::filesystem::path& path);
WorkloadSpec workload_from_file(const std::filesystem::path& path);

/// Reads a whole JSON file; parse errors become PlanError with line/column.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace isf
