#pragma once

// In-memory tensor/metadata/model store and its TCP server.
//
// Shared-nothing: a store only ever accepts connections. Clustered
// placement is decided by clients (see routing.hpp); RUN_MODEL only reads
// tensors resident on the receiving store.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "isf/exec.hpp"
#include "isf/net.hpp"
#include "isf/wire.hpp"

namespace isf {

class StoreState {
 public:
  explicit StoreState(std::uint64_t max_bytes);

  /// Inserts or atomically replaces. Throws Error(OutOfMemory) and leaves
  /// the store untouched if the cap would be exceeded.
  void put_tensor(std::string key, Tensor t);
  std::shared_ptr<const Tensor> get_tensor(std::string_view key) const;
  bool del_tensor(std::string_view key);
  bool exists(std::string_view key) const;

  void put_meta(std::string key, MetaValue v);
  std::optional<MetaValue> get_meta(std::string_view key) const;

  void set_model(std::string key, ModelSpec spec);
  std::shared_ptr<const ModelSpec> get_model(std::string_view key) const;

  /// Evaluates a resident model on resident inputs and stores the outputs.
  /// All-or-nothing: on any error no output key is written.
  void run_model(const RunModelRequest& req);

  void flush();
  InfoMap info() const;

  std::uint64_t bytes_used() const;
  std::uint64_t max_bytes() const noexcept { return max_bytes_; }
  std::size_t tensor_count() const;
  std::uint64_t requests_served() const noexcept { return requests_.load(); }
  void count_request() noexcept { requests_.fetch_add(1, std::memory_order_relaxed); }

 private:
  // Caller holds mu_ exclusively.
  void reserve_locked(std::int64_t delta, std::string_view what);

  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<const Tensor>, std::less<>> tensors_;
  std::map<std::string, MetaValue, std::less<>> meta_;
  std::map<std::string, std::shared_ptr<const ModelSpec>, std::less<>> models_;
  std::uint64_t bytes_used_ = 0;
  const std::uint64_t max_bytes_;
  std::atomic<std::uint64_t> requests_{0};
  const std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
};

/// Dispatches one request frame against the state and returns the response
/// frame. Never throws for protocol-level problems: they become error
/// statuses in the response.
Frame handle_request(StoreState& state, const Frame& request);

struct StoreConfig {
  std::uint64_t max_bytes = std::uint64_t{4} << 30;
  /// Requests executed concurrently; 0 means hardware concurrency.
  unsigned workers = 0;
  /// CPU affinity for the whole process; empty leaves it unchanged.
  std::vector<int> cpus;
  std::size_t max_frame_payload = kDefaultMaxPayload;
  /// One JSON object per request is appended here when non-null.
  std::FILE* request_log = nullptr;
};

/// Pins the calling process to `cpus` (ids not present on the machine are
/// dropped). Returns false where affinity is unsupported or nothing is left.
bool apply_cpu_affinity(const std::vector<int>& cpus);

/// TCP front end: one thread per connection, requests on a connection are
/// served in order, at most `workers` requests execute at once.
class StoreServer {
 public:
  StoreServer(StoreConfig config, const HostPort& bind);
  ~StoreServer();
  StoreServer(const StoreServer&) = delete;
  StoreServer& operator=(const StoreServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  std::string address() const { return host_ + ":" + std::to_string(port_); }
  StoreState& state() noexcept { return state_; }

  /// Accept loop; returns after stop().
  void run();
  /// Safe to call from any thread, any number of times.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  StoreConfig config_;
  StoreState state_;
  std::string host_;
  std::uint16_t port_ = 0;
};

}  // namespace isf
