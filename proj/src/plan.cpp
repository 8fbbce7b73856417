#include "isf/plan.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace isf {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) { throw PlanError(path + ": " + msg); }

// Reads fields out of one JSON object and rejects whatever was not read.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string at(const std::string& name) const { return path_ + "." + name; }

  const nlohmann::json* find(const std::string& name) {
    seen_.insert(name);
    auto it = j_.find(name);
    return it == j_.end() ? nullptr : &*it;
  }

  static bool non_negative_int(const nlohmann::json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }

  template <class T>
  void uint(const std::string& name, T& out, bool required = false) {
    const auto* v = find(name);
    if (!v) {
      if (required) fail(at(name), "required field missing");
      return;
    }
    if (!non_negative_int(*v)) fail(at(name), "expected a non-negative integer");
    const auto x = v->get<std::uint64_t>();
    if (x > std::numeric_limits<T>::max()) fail(at(name), "value out of range");
    out = static_cast<T>(x);
  }

  void boolean(const std::string& name, bool& out) {
    const auto* v = find(name);
    if (!v) return;
    if (!v->is_boolean()) fail(at(name), "expected true or false");
    out = v->get<bool>();
  }

  void string(const std::string& name, std::string& out, bool required = false) {
    const auto* v = find(name);
    if (!v) {
      if (required) fail(at(name), "required field missing");
      return;
    }
    if (!v->is_string()) fail(at(name), "expected a string");
    out = v->get<std::string>();
  }

  template <class T>
  void uint_list(const std::string& name, std::vector<T>& out) {
    const auto* v = find(name);
    if (!v) return;
    if (!v->is_array()) fail(at(name), "expected an array");
    out.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto& e = (*v)[i];
      const auto p = at(name) + "[" + std::to_string(i) + "]";
      if (!non_negative_int(e)) fail(p, "expected a non-negative integer");
      const auto x = e.get<std::uint64_t>();
      if (x > std::numeric_limits<T>::max()) fail(p, "value out of range");
      out.push_back(static_cast<T>(x));
    }
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) fail(at(k), "unknown field");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

WorkloadMode workload_mode_from_string(const std::string& s, const std::string& path) {
  if (s == "transfer") return WorkloadMode::Transfer;
  if (s == "inference") return WorkloadMode::Inference;
  if (s == "train_feed") return WorkloadMode::TrainFeed;
  fail(path, "expected one of transfer, inference, train_feed (got \"" + s + "\")");
}

}  // namespace

std::string_view to_string(WorkloadMode m) {
  switch (m) {
    case WorkloadMode::Transfer: return "transfer";
    case WorkloadMode::Inference: return "inference";
    case WorkloadMode::TrainFeed: return "train_feed";
  }
  return "?";
}

void WorkloadSpec::validate() const {
  if (iterations < 1) fail("workload.iterations", "must be at least 1");
  if (payload_bytes_per_rank % 4 != 0) fail("workload.payload_bytes_per_rank", "must be a multiple of 4");
  if (payload_bytes_per_rank == 0 && mode != WorkloadMode::Inference)
    fail("workload.payload_bytes_per_rank", "must be positive");
  if (send_every < 1) fail("workload.send_every", "must be at least 1");
  if (batch_n < 1) fail("workload.batch_n", "must be at least 1");
  if (poll_interval_ms < 1) fail("workload.poll_interval_ms", "must be at least 1");
  if (poll_max_tries < 1) fail("workload.poll_max_tries", "must be at least 1");
  if (mode == WorkloadMode::Inference && !model_file) fail("workload.model_file", "required in inference mode");
  if (inline_eval && mode != WorkloadMode::Inference) fail("workload.inline_eval", "only valid in inference mode");
  for (auto d : sample_shape) {
    if (d == 0) fail("workload.sample_shape", "dimensions must be positive");
  }
}

void DeploymentPlan::validate() const {
  if (nodes < 1) fail("plan.nodes", "must be at least 1");
  if (ranks_per_node < 1) fail("plan.ranks_per_node", "must be at least 1");
  if (db_cores < 1) fail("plan.db_cores", "must be at least 1");
  if (mode == DeploymentMode::Colocated && shards) fail("plan.shards", "not allowed in colocated mode");
  if (mode == DeploymentMode::Clustered) {
    if (!shards) fail("plan.shards", "required in clustered mode");
    if (*shards < 1) fail("plan.shards", "must be at least 1");
  }
  if (consumer_ranks_per_node > 0 && ranks_per_node % consumer_ranks_per_node != 0)
    fail("plan.consumer_ranks_per_node", "must divide ranks_per_node");
  if (consumer_ranks_per_node > 0 && workload.mode != WorkloadMode::TrainFeed)
    fail("plan.consumer_ranks_per_node", "consumers need workload.mode train_feed");
  const auto n = store_count();
  if (!store_ports.empty()) {
    if (store_ports.size() != n)
      fail("plan.store_ports", "expected " + std::to_string(n) + " ports, got " + std::to_string(store_ports.size()));
    std::set<std::uint16_t> seen;
    for (std::size_t i = 0; i < store_ports.size(); ++i) {
      if (store_ports[i] == 0) fail("plan.store_ports[" + std::to_string(i) + "]", "port 0 is not allowed");
      if (!seen.insert(store_ports[i]).second)
        fail("plan.store_ports[" + std::to_string(i) + "]", "duplicate port " + std::to_string(store_ports[i]));
    }
  } else {
    if (base_port == 0) fail("plan.base_port", "must be positive");
    if (std::uint32_t{base_port} + n - 1 > 65535) fail("plan.base_port", "port range exceeds 65535");
  }
  if (host.empty()) fail("plan.host", "must not be empty");
  if (stagger_nodes && mode != DeploymentMode::Colocated)
    fail("plan.stagger_nodes", "only valid in colocated mode (clustered stores are shared by all nodes)");
  workload.validate();
}

std::uint16_t DeploymentPlan::store_port(std::uint32_t i) const {
  if (!store_ports.empty()) return store_ports.at(i);
  return static_cast<std::uint16_t>(base_port + i);
}

std::string DeploymentPlan::store_address(std::uint32_t i) const {
  return host + ":" + std::to_string(store_port(i));
}

ShardMap DeploymentPlan::shard_map() const {
  std::vector<std::string> a;
  for (std::uint32_t i = 0; i < store_count(); ++i) a.push_back(store_address(i));
  return ShardMap(a);
}

std::uint32_t DeploymentPlan::producer_virtual_node(std::uint32_t k) const {
  return mode == DeploymentMode::Clustered ? shards.value_or(0) + k : k;
}

std::vector<std::int64_t> DeploymentPlan::producers_for_consumer(std::uint32_t c) const {
  if (consumer_ranks_per_node == 0) return {};
  const std::uint32_t ratio = ranks_per_node / consumer_ranks_per_node;
  const std::uint32_t node = c / consumer_ranks_per_node;
  const std::uint32_t local = c % consumer_ranks_per_node;
  std::vector<std::int64_t> out;
  for (std::uint32_t i = 0; i < ratio; ++i) out.push_back(std::int64_t{node} * ranks_per_node + local * ratio + i);
  return out;
}

WorkloadSpec workload_from_json(const nlohmann::json& j, const std::string& path) {
  WorkloadSpec w;
  Fields f(j, path);
  f.uint("payload_bytes_per_rank", w.payload_bytes_per_rank);
  f.uint("iterations", w.iterations);
  f.uint("warmup", w.warmup);
  f.uint("sleep_ms", w.sleep_ms);
  std::string mode;
  f.string("mode", mode);
  if (!mode.empty()) w.mode = workload_mode_from_string(mode, f.at("mode"));
  f.uint("send_every", w.send_every);
  std::string model;
  f.string("model_file", model);
  if (!model.empty()) w.model_file = model;
  f.uint("batch_n", w.batch_n);
  f.uint_list("sample_shape", w.sample_shape);
  f.boolean("inline_eval", w.inline_eval);
  f.uint("train_ms", w.train_ms);
  f.uint("seed", w.seed);
  f.uint("retain_steps", w.retain_steps);
  f.uint("poll_interval_ms", w.poll_interval_ms);
  f.uint("poll_max_tries", w.poll_max_tries);
  f.boolean("lockstep", w.lockstep);
  f.boolean("shuffle", w.shuffle);
  f.boolean("verify", w.verify);
  f.finish();
  w.validate();
  return w;
}

nlohmann::json to_json(const WorkloadSpec& w) {
  nlohmann::json j{
      {"payload_bytes_per_rank", w.payload_bytes_per_rank},
      {"iterations", w.iterations},
      {"warmup", w.warmup},
      {"sleep_ms", w.sleep_ms},
      {"mode", std::string(to_string(w.mode))},
      {"send_every", w.send_every},
      {"batch_n", w.batch_n},
      {"sample_shape", w.sample_shape},
      {"inline_eval", w.inline_eval},
      {"train_ms", w.train_ms},
      {"seed", w.seed},
      {"retain_steps", w.retain_steps},
      {"poll_interval_ms", w.poll_interval_ms},
      {"poll_max_tries", w.poll_max_tries},
      {"lockstep", w.lockstep},
      {"shuffle", w.shuffle},
      {"verify", w.verify},
  };
  if (w.model_file) j["model_file"] = *w.model_file;
  return j;
}

DeploymentPlan plan_from_json(const nlohmann::json& j) {
  DeploymentPlan p;
  Fields f(j, "plan");
  std::string mode;
  f.string("mode", mode, true);
  try {
    p.mode = deployment_mode_from_string(mode);
  } catch (const std::invalid_argument&) {
    fail(f.at("mode"), "expected colocated or clustered (got \"" + mode + "\")");
  }
  f.uint("nodes", p.nodes, true);
  f.uint("ranks_per_node", p.ranks_per_node, true);
  f.uint("db_cores", p.db_cores);
  if (f.find("shards")) {
    std::uint32_t s = 0;
    f.uint("shards", s);
    p.shards = s;
  }
  f.uint("consumer_ranks_per_node", p.consumer_ranks_per_node);
  f.string("host", p.host);
  f.uint("base_port", p.base_port);
  f.uint_list("store_ports", p.store_ports);
  f.uint("store_max_bytes", p.store_max_bytes);
  f.boolean("stagger_nodes", p.stagger_nodes);
  if (const auto* w = f.find("workload")) p.workload = workload_from_json(*w, "plan.workload");
  f.finish();
  p.validate();
  return p;
}

nlohmann::json to_json(const DeploymentPlan& p) {
  nlohmann::json j{
      {"mode", std::string(to_string(p.mode))},
      {"nodes", p.nodes},
      {"ranks_per_node", p.ranks_per_node},
      {"db_cores", p.db_cores},
      {"consumer_ranks_per_node", p.consumer_ranks_per_node},
      {"host", p.host},
      {"base_port", p.base_port},
      {"store_max_bytes", p.store_max_bytes},
      {"stagger_nodes", p.stagger_nodes},
      {"workload", to_json(p.workload)},
  };
  if (p.shards) j["shards"] = *p.shards;
  if (!p.store_ports.empty()) j["store_ports"] = p.store_ports;
  return j;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PlanError(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw PlanError(path.string() + ": " + e.what());
  }
}

DeploymentPlan plan_from_file(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  try {
    return plan_from_json(j);
  } catch (const PlanError& e) {
    throw PlanError(path.string() + ": " + e.what());
  }
}

WorkloadSpec workload_from_file(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  try {
    return workload_from_json(j);
  } catch (const PlanError& e) {
    throw PlanError(path.string() + ": " + e.what());
  }
}

}  // namespace isf
