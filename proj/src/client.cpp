#include "isf/client.hpp"

#include <cstdlib>
#include <fstream>
#include <ostream>
#include <system_error>
#include <thread>

#include "isf/exec.hpp"

namespace isf {

using Clock = std::chrono::steady_clock;

std::string_view to_string(DeploymentMode m) {
  return m == DeploymentMode::Colocated ? "colocated" : "clustered";
}

DeploymentMode deployment_mode_from_string(std::string_view s) {
  if (s == "colocated") return DeploymentMode::Colocated;
  if (s == "clustered") return DeploymentMode::Clustered;
  throw std::invalid_argument("mode must be \"colocated\" or \"clustered\", got \"" +
                              std::string(s) + "\"");
}

ShardMap ClientConfig::resolve_shards() const {
  ShardMap map;
  if (shards) {
    map = *shards;
  } else if (mode == DeploymentMode::Colocated) {
    const char* addr = std::getenv(addr_env.c_str());
    if (!addr || !*addr) throw std::invalid_argument(addr_env + " is not set");
    map = ShardMap({std::string(addr)});
  } else {
    const char* csv = std::getenv(shard_map_env.c_str());
    if (!csv || !*csv) throw std::invalid_argument(shard_map_env + " is not set");
    map = ShardMap::parse(csv);
  }
  if (mode == DeploymentMode::Colocated && map.count() != 1) {
    throw std::invalid_argument("co-located mode needs exactly one store address, got " +
                                std::to_string(map.count()));
  }
  if (map.count() == 0) throw std::invalid_argument("clustered mode needs at least one shard");
  return map;
}

// ---------------------------------------------------------------------------
// TimingSink

void TimingSink::record(std::string op, std::string component, std::string key, std::uint64_t bytes,
                        Clock::duration elapsed) {
  auto us = std::chrono::duration_cast<std::chrono::microseconds>(elapsed).count();
  // Sub-microsecond calls still happened; keep micros strictly positive.
  if (us < 1) us = 1;
  records_.push_back(TimingRecord{std::move(op), std::move(component), std::move(key), iter_, bytes,
                                  static_cast<std::uint64_t>(us)});
}

void TimingSink::write_csv(std::ostream& out, bool header) const {
  if (header) out << kCsvHeader << '\n';
  for (const auto& r : records_) {
    out << run_id_ << ',' << rank_ << ',' << r.op << ',' << r.component << ',' << r.iter << ','
        << r.bytes << ',' << r.micros << '\n';
  }
}

void TimingSink::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(out);
}

// ---------------------------------------------------------------------------
// Client

Client Client::connect(const ClientConfig& config, TimingSink* sink) {
  const auto start = Clock::now();
  Client c;
  c.shards_ = config.resolve_shards();
  c.mode_ = config.mode;
  c.request_timeout_ = config.request_timeout;
  c.sink_ = sink;
  c.conns_.reserve(c.shards_.count());

  for (const auto& address : c.shards_.addresses()) {
    const HostPort hp = parse_host_port(address);
    std::string last_error;
    net::Socket sock;
    for (int attempt = 0; attempt < std::max(1, config.max_attempts); ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(config.backoff);
      try {
        sock = net::connect_tcp(hp, config.connect_timeout);
        break;
      } catch (const std::exception& e) {
        last_error = e.what();
      }
    }
    if (!sock.valid()) {
      throw ClientError("cannot connect to store " + address + " after " +
                            std::to_string(config.max_attempts) + " attempts: " + last_error,
                        true);
    }
    net::set_io_timeout(sock, config.request_timeout);
    Connection conn;
    conn.address = address;
    conn.sock = std::move(sock);
    conn.buf.resize(256 * 1024);
    c.conns_.push_back(std::move(conn));
  }
  for (std::size_t i = 0; i < c.conns_.size(); ++i) c.call(i, Command::Ping, {});
  c.record("connect", "client_init", "", 0, start);
  return c;
}

Bytes Client::call(std::size_t shard, Command cmd, Bytes payload) {
  auto& conn = conns_.at(shard);
  if (!conn.sock.valid()) throw ClientError("connection to " + conn.address + " is closed", false);

  Frame req;
  req.command = static_cast<std::uint8_t>(cmd);
  req.request_id = conn.next_id++;
  req.payload = std::move(payload);

  std::optional<Frame> resp;
  try {
    net::send_all(conn.sock, encode_frame(req));
    while (!(resp = conn.decoder.next())) {
      const std::size_t n = net::recv_some(conn.sock, conn.buf);
      if (n == 0) throw ClientError("store " + conn.address + " closed the connection", false);
      conn.decoder.feed(ByteView(conn.buf.data(), n));
    }
  } catch (const net::Timeout& e) {
    // A late response would desynchronise the stream; drop the connection.
    conn.sock.reset();
    throw ClientError(std::string(to_string(cmd)) + " to " + conn.address + ": " + e.what(), true);
  } catch (const std::system_error& e) {
    conn.sock.reset();
    throw ClientError(std::string(to_string(cmd)) + " to " + conn.address + ": " + e.what(), false);
  }

  if (resp->command != (req.command | kResponseBit) || resp->request_id != req.request_id) {
    conn.sock.reset();
    throw ClientError("mismatched response from " + conn.address, false);
  }
  if (resp->payload.empty()) throw ClientError("response without status from " + conn.address, false);
  const auto status = static_cast<Status>(resp->payload.front());
  if (status != Status::Ok) {
    throw Error(status, std::string(to_string(cmd)) + " on " + conn.address + ": " +
                            std::string(resp->payload.begin() + 1, resp->payload.end()));
  }
  resp->payload.erase(resp->payload.begin());
  return std::move(resp->payload);
}

void Client::record(std::string op, std::string component, std::string_view key, std::uint64_t bytes,
                    Clock::time_point start) {
  if (sink_) sink_->record(std::move(op), std::move(component), std::string(key), bytes, Clock::now() - start);
}

std::size_t Client::shard_of(std::string_view key) const noexcept {
  return mode_ == DeploymentMode::Colocated ? 0 : shard_for_key(key, shards_);
}

void Client::put_tensor(std::string_view key, const Tensor& t) {
  const auto start = Clock::now();
  call(shard_of(key), Command::PutTensor, encode_put_tensor(key, t));
  record("put_tensor", "send", key, t.byte_size(), start);
}

Tensor Client::get_tensor(std::string_view key) {
  const auto start = Clock::now();
  Tensor t = decode_tensor(call(shard_of(key), Command::GetTensor, encode_key_request(key)));
  record("get_tensor", "retrieve", key, t.byte_size(), start);
  return t;
}

bool Client::delete_tensor(std::string_view key) {
  const auto start = Clock::now();
  bool deleted = true;
  try {
    call(shard_of(key), Command::DelTensor, encode_key_request(key));
  } catch (const Error& e) {
    if (e.status() != Status::NotFound) throw;
    deleted = false;
  }
  record("delete_tensor", "delete", key, 0, start);
  return deleted;
}

bool Client::tensor_exists(std::string_view key) {
  const auto start = Clock::now();
  const Bytes body = call(shard_of(key), Command::Exists, encode_key_request(key));
  if (body.size() != 1) throw ClientError("malformed EXISTS response", false);
  record("tensor_exists", "exists", key, 0, start);
  return body[0] != 0;
}

bool Client::poll_key(std::string_view key, std::chrono::milliseconds interval, int max_tries) {
  if (interval.count() < 1 || max_tries < 1) {
    throw std::invalid_argument("poll_key needs interval >= 1ms and max_tries >= 1");
  }
  const auto start = Clock::now();
  auto* saved = std::exchange(sink_, nullptr);
  bool found = false;
  int tries = 0;
  try {
    while (tries < max_tries) {
      ++tries;
      if (tensor_exists(key)) {
        found = true;
        break;
      }
      if (tries < max_tries) std::this_thread::sleep_for(interval);
    }
  } catch (...) {
    sink_ = saved;
    throw;
  }
  sink_ = saved;
  last_poll_tries_ = tries;
  record("poll_key", "poll", key, static_cast<std::uint64_t>(tries), start);
  return found;
}

void Client::put_meta(std::string_view key, const MetaValue& v) {
  const auto start = Clock::now();
  Bytes payload = encode_put_meta(key, v);
  const auto n = payload.size();
  call(shard_of(key), Command::PutMeta, std::move(payload));
  record("put_meta", "meta", key, n, start);
}

MetaValue Client::get_meta(std::string_view key) {
  const auto start = Clock::now();
  const Bytes body = call(shard_of(key), Command::GetMeta, encode_key_request(key));
  MetaValue v = decode_meta(body);
  record("get_meta", "meta", key, body.size(), start);
  return v;
}

void Client::set_model(std::string_view key, ByteView blob, std::string_view device_hint) {
  const auto start = Clock::now();
  parse_model(blob);  // throws ModelParseError before touching the network
  const Bytes payload = encode_set_model(key, device_hint, blob);
  for (std::size_t i = 0; i < conns_.size(); ++i) call(i, Command::SetModel, payload);
  record("set_model", "model_set", key, blob.size(), start);
}

void Client::set_model_from_file(std::string_view key, const std::filesystem::path& path,
                                 std::string_view device_hint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read model file " + path.string());
  Bytes blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  set_model(key, blob, device_hint);
}

Bytes Client::get_model(std::string_view key, std::size_t shard) {
  const auto start = Clock::now();
  Bytes blob = call(shard, Command::GetModel, encode_key_request(key));
  record("get_model", "model_get", key, blob.size(), start);
  return blob;
}

void Client::run_model(std::string_view model_key, const std::vector<std::string>& inputs,
                       const std::vector<std::string>& outputs) {
  if (inputs.empty()) throw std::invalid_argument("run_model needs at least one input key");
  const std::size_t shard = shard_of(inputs.front());
  for (const auto& k : inputs) {
    if (shard_of(k) != shard) {
      throw std::invalid_argument("run_model inputs span shards: '" + inputs.front() + "' -> " +
                                  std::to_string(shard) + ", '" + k + "' -> " +
                                  std::to_string(shard_of(k)));
    }
  }
  for (const auto& k : outputs) {
    if (shard_of(k) != shard) {
      throw std::invalid_argument("run_model output '" + k + "' routes to shard " + std::to_string(shard_of(k)) +
                                  ", inputs live on shard " + std::to_string(shard));
    }
  }
  const auto start = Clock::now();
  RunModelRequest req{std::string(model_key), inputs, outputs};
  call(shard, Command::RunModel, encode_run_model(req));
  record("run_model", "model_eval", model_key, 0, start);
}

InfoMap Client::info(std::size_t shard) {
  const auto start = Clock::now();
  InfoMap m = decode_info(call(shard, Command::Info, {}));
  record("info", "admin", "", 0, start);
  return m;
}

void Client::flush(std::size_t shard) {
  const auto start = Clock::now();
  call(shard, Command::Flush, {});
  record("flush", "admin", "", 0, start);
}

void Client::ping(std::size_t shard) {
  const auto start = Clock::now();
  call(shard, Command::Ping, {});
  record("ping", "admin", "", 0, start);
}

}  // namespace isf
