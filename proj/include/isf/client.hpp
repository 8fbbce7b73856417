#pragma once

// Synchronous client: one connection per store, one outstanding request per
// connection. Every public call blocks until its response frame has been
// fully received, and records one TimingRecord when a sink is attached.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "isf/net.hpp"
#include "isf/routing.hpp"
#include "isf/wire.hpp"

namespace isf {

enum class DeploymentMode { Colocated, Clustered };

std::string_view to_string(DeploymentMode m);
DeploymentMode deployment_mode_from_string(std::string_view s);

inline constexpr const char* kAddrEnv = "ISF_DB_ADDR";
inline constexpr const char* kShardMapEnv = "ISF_SHARD_MAP";

struct ClientConfig {
  DeploymentMode mode = DeploymentMode::Colocated;
  /// Environment variables consulted when `shards` is not given.
  std::string addr_env = kAddrEnv;
  std::string shard_map_env = kShardMapEnv;
  /// Explicit shard list; overrides the environment.
  std::optional<ShardMap> shards;
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds request_timeout{60000};
  int max_attempts = 20;
  std::chrono::milliseconds backoff{50};

  /// Resolves the address list: exactly one address in co-located mode,
  /// at least one in clustered mode. Throws std::invalid_argument.
  ShardMap resolve_shards() const;
};

/// Connect failures, timeouts and transport errors. Store-side errors are
/// reported as isf::Error with the store's status.
class ClientError : public std::runtime_error {
 public:
  ClientError(const std::string& what, bool retriable)
      : std::runtime_error(what), retriable_(retriable) {}
  bool retriable() const noexcept { return retriable_; }

 private:
  bool retriable_;
};

struct TimingRecord {
  std::string op;
  std::string component;
  std::string key;
  std::int64_t iter = 0;  // negative for warmup iterations
  std::uint64_t bytes = 0;
  std::uint64_t micros = 0;
};

/// Collects TimingRecords for one rank. CSV columns:
/// run_id,rank,op,component,iter,bytes,micros
class TimingSink {
 public:
  TimingSink(std::string run_id, std::int64_t rank) : run_id_(std::move(run_id)), rank_(rank) {}

  void set_iteration(std::int64_t iter) noexcept { iter_ = iter; }
  std::int64_t iteration() const noexcept { return iter_; }

  void record(std::string op, std::string component, std::string key, std::uint64_t bytes,
              std::chrono::steady_clock::duration elapsed);

  const std::vector<TimingRecord>& records() const noexcept { return records_; }
  const std::string& run_id() const noexcept { return run_id_; }
  std::int64_t rank() const noexcept { return rank_; }

  static constexpr std::string_view kCsvHeader = "run_id,rank,op,component,iter,bytes,micros";
  void write_csv(std::ostream& out, bool header = true) const;
  void write_csv(const std::filesystem::path& path) const;

 private:
  std::string run_id_;
  std::int64_t rank_;
  std::int64_t iter_ = 0;
  std::vector<TimingRecord> records_;
};

class Client {
 public:
  /// Connects (with retries) and PINGs every shard. Records "client_init".
  static Client connect(const ClientConfig& config, TimingSink* sink = nullptr);

  Client(Client&&) noexcept = default;
  Client& operator=(Client&&) noexcept = default;
  ~Client() = default;

  void put_tensor(std::string_view key, const Tensor& t);
  /// Throws isf::Error(NotFound) for an absent key.
  Tensor get_tensor(std::string_view key);
  /// False when the key was absent.
  bool delete_tensor(std::string_view key);
  bool tensor_exists(std::string_view key);

  /// Issues EXISTS until the key appears or `max_tries` polls are spent.
  bool poll_key(std::string_view key, std::chrono::milliseconds interval, int max_tries);
  int last_poll_tries() const noexcept { return last_poll_tries_; }

  void put_meta(std::string_view key, const MetaValue& v);
  MetaValue get_meta(std::string_view key);

  /// Validates the blob locally (no request is sent if it does not parse),
  /// then stores it on every shard.
  void set_model(std::string_view key, ByteView blob, std::string_view device_hint = "cpu");
  void set_model_from_file(std::string_view key, const std::filesystem::path& path,
                           std::string_view device_hint = "cpu");
  /// GET_MODEL on one shard.
  Bytes get_model(std::string_view key, std::size_t shard);

  /// Runs the model on the shard owning the inputs. All input and output
  /// keys must route to the same shard; otherwise throws before any request.
  void run_model(std::string_view model_key, const std::vector<std::string>& inputs,
                 const std::vector<std::string>& outputs);

  InfoMap info(std::size_t shard);
  void flush(std::size_t shard);
  void ping(std::size_t shard);

  std::size_t shard_count() const noexcept { return conns_.size(); }
  std::size_t shard_of(std::string_view key) const noexcept;
  const ShardMap& shards() const noexcept { return shards_; }
  TimingSink* sink() const noexcept { return sink_; }
  void set_sink(TimingSink* sink) noexcept { sink_ = sink; }

 private:
  struct Connection {
    std::string address;
    net::Socket sock;
    std::uint64_t next_id = 1;
    FrameDecoder decoder;
    std::vector<std::uint8_t> buf;
  };

  Client() = default;

  /// Sends one request and blocks for the matching response. Returns the
  /// response body after the status byte; throws isf::Error on non-OK.
  Bytes call(std::size_t shard, Command cmd, Bytes payload);
  void record(std::string op, std::string component, std::string_view key, std::uint64_t bytes,
              std::chrono::steady_clock::time_point start);

  ShardMap shards_;
  DeploymentMode mode_ = DeploymentMode::Colocated;
  std::vector<Connection> conns_;
  std::chrono::milliseconds request_timeout_{60000};
  TimingSink* sink_ = nullptr;
  int last_poll_tries_ = 0;
};

}  // namespace isf
