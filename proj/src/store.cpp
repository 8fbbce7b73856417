#include "isf/store.hpp"

#include <poll.h>
#include <sched.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <limits>
#include <list>
#include <semaphore>
#include <thread>

namespace isf {

namespace {

std::int64_t signed_size(std::size_t n) { return static_cast<std::int64_t>(n); }

}  // namespace

// ---------------------------------------------------------------------------
// StoreState

StoreState::StoreState(std::uint64_t max_bytes) : max_bytes_(max_bytes) {}

void StoreState::reserve_locked(std::int64_t delta, std::string_view what) {
  const auto next = static_cast<std::int64_t>(bytes_used_) + delta;
  if (next > static_cast<std::int64_t>(max_bytes_)) {
    throw Error(Status::OutOfMemory, std::string(what) + " would raise bytes_used to " +
                                         std::to_string(next) + " (max_bytes " +
                                         std::to_string(max_bytes_) + ")");
  }
}

void StoreState::put_tensor(std::string key, Tensor t) {
  auto value = std::make_shared<const Tensor>(std::move(t));
  std::unique_lock lock(mu_);
  auto it = tensors_.find(key);
  const std::int64_t old = it == tensors_.end() ? 0 : signed_size(it->second->byte_size());
  const std::int64_t delta = signed_size(value->byte_size()) - old;
  reserve_locked(delta, "PUT_TENSOR " + key);
  bytes_used_ = static_cast<std::uint64_t>(static_cast<std::int64_t>(bytes_used_) + delta);
  if (it == tensors_.end()) {
    tensors_.emplace(std::move(key), std::move(value));
  } else {
    it->second = std::move(value);
  }
}

std::shared_ptr<const Tensor> StoreState::get_tensor(std::string_view key) const {
  std::shared_lock lock(mu_);
  auto it = tensors_.find(key);
  return it == tensors_.end() ? nullptr : it->second;
}

bool StoreState::del_tensor(std::string_view key) {
  std::shared_ptr<const Tensor> doomed;
  std::unique_lock lock(mu_);
  auto it = tensors_.find(key);
  if (it == tensors_.end()) return false;
  bytes_used_ -= it->second->byte_size();
  doomed = std::move(it->second);
  tensors_.erase(it);
  return true;
}

bool StoreState::exists(std::string_view key) const {
  std::shared_lock lock(mu_);
  return tensors_.find(key) != tensors_.end();
}

void StoreState::put_meta(std::string key, MetaValue v) {
  std::unique_lock lock(mu_);
  meta_.insert_or_assign(std::move(key), std::move(v));
}

std::optional<MetaValue> StoreState::get_meta(std::string_view key) const {
  std::shared_lock lock(mu_);
  auto it = meta_.find(key);
  if (it == meta_.end()) return std::nullopt;
  return it->second;
}

void StoreState::set_model(std::string key, ModelSpec spec) {
  auto value = std::make_shared<const ModelSpec>(std::move(spec));
  std::unique_lock lock(mu_);
  auto it = models_.find(key);
  const std::int64_t old = it == models_.end() ? 0 : signed_size(it->second->blob.size());
  const std::int64_t delta = signed_size(value->blob.size()) - old;
  reserve_locked(delta, "SET_MODEL " + key);
  bytes_used_ = static_cast<std::uint64_t>(static_cast<std::int64_t>(bytes_used_) + delta);
  if (it == models_.end()) {
    models_.emplace(std::move(key), std::move(value));
  } else {
    it->second = std::move(value);
  }
}

std::shared_ptr<const ModelSpec> StoreState::get_model(std::string_view key) const {
  std::shared_lock lock(mu_);
  auto it = models_.find(key);
  return it == models_.end() ? nullptr : it->second;
}

void StoreState::run_model(const RunModelRequest& req) {
  std::shared_ptr<const ModelSpec> model;
  std::vector<Tensor> inputs;
  {
    std::shared_lock lock(mu_);
    auto m = models_.find(req.model_key);
    if (m == models_.end()) throw Error(Status::NotFound, "model '" + req.model_key + "' not found");
    model = m->second;
    inputs.reserve(req.inputs.size());
    for (const auto& k : req.inputs) {
      auto it = tensors_.find(k);
      if (it == tensors_.end()) throw Error(Status::NotFound, "input '" + k + "' not found");
      inputs.push_back(*it->second);
    }
  }

  auto outputs = run(*model, inputs);
  if (outputs.size() != req.outputs.size()) {
    throw Error(Status::ExecError, "model produces " + std::to_string(outputs.size()) +
                                       " outputs, request names " +
                                       std::to_string(req.outputs.size()));
  }

  // Later duplicates of an output key win, as if written in order.
  std::map<std::string, std::shared_ptr<const Tensor>, std::less<>> staged;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    staged.insert_or_assign(req.outputs[i], std::make_shared<const Tensor>(std::move(outputs[i])));
  }

  std::unique_lock lock(mu_);
  std::int64_t delta = 0;
  for (const auto& [k, t] : staged) {
    delta += signed_size(t->byte_size());
    if (auto it = tensors_.find(k); it != tensors_.end()) delta -= signed_size(it->second->byte_size());
  }
  reserve_locked(delta, "RUN_MODEL outputs");
  bytes_used_ = static_cast<std::uint64_t>(static_cast<std::int64_t>(bytes_used_) + delta);
  for (auto& [k, t] : staged) tensors_.insert_or_assign(k, std::move(t));
}

void StoreState::flush() {
  std::unique_lock lock(mu_);
  tensors_.clear();
  meta_.clear();
  models_.clear();
  bytes_used_ = 0;
}

InfoMap StoreState::info() const {
  const auto uptime = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started_);
  std::shared_lock lock(mu_);
  return {
      {"keys", static_cast<std::int64_t>(tensors_.size())},
      {"meta_keys", static_cast<std::int64_t>(meta_.size())},
      {"models", static_cast<std::int64_t>(models_.size())},
      {"bytes_used", static_cast<std::int64_t>(bytes_used_)},
      {"max_bytes", static_cast<std::int64_t>(max_bytes_)},
      {"requests_served", static_cast<std::int64_t>(requests_.load())},
      {"uptime_ms", static_cast<std::int64_t>(uptime.count())},
  };
}

std::uint64_t StoreState::bytes_used() const {
  std::shared_lock lock(mu_);
  return bytes_used_;
}

std::size_t StoreState::tensor_count() const {
  std::shared_lock lock(mu_);
  return tensors_.size();
}

// ---------------------------------------------------------------------------
// Dispatch

Frame handle_request(StoreState& state, const Frame& request) {
  state.count_request();
  const auto command = command_from_code(request.command);
  if (!command) {
    return make_error_response(request, Status::BadRequest,
                               "unknown command " + std::to_string(request.command));
  }
  try {
    const ByteView p = request.payload;
    switch (*command) {
      case Command::Ping:
        return make_response(request, Status::Ok);
      case Command::PutTensor: {
        auto [key, tensor] = decode_put_tensor(p);
        state.put_tensor(std::move(key), std::move(tensor));
        return make_response(request, Status::Ok);
      }
      case Command::GetTensor: {
        auto t = state.get_tensor(decode_key_request(p));
        if (!t) return make_error_response(request, Status::NotFound, "no such tensor");
        // Encode straight into the response payload to avoid another copy.
        ByteWriter w(1 + 2 + 8 * t->shape().size() + t->byte_size());
        w.u8(static_cast<std::uint8_t>(Status::Ok));
        encode_tensor(w, *t);
        Frame f;
        f.command = request.command | kResponseBit;
        f.request_id = request.request_id;
        f.payload = std::move(w).take();
        return f;
      }
      case Command::DelTensor: {
        if (!state.del_tensor(decode_key_request(p))) {
          return make_error_response(request, Status::NotFound, "no such tensor");
        }
        return make_response(request, Status::Ok);
      }
      case Command::Exists: {
        const std::uint8_t found = state.exists(decode_key_request(p)) ? 1 : 0;
        return make_response(request, Status::Ok, ByteView(&found, 1));
      }
      case Command::PutMeta: {
        auto [key, value] = decode_put_meta(p);
        state.put_meta(std::move(key), std::move(value));
        return make_response(request, Status::Ok);
      }
      case Command::GetMeta: {
        auto v = state.get_meta(decode_key_request(p));
        if (!v) return make_error_response(request, Status::NotFound, "no such metadata key");
        return make_response(request, Status::Ok, encode_meta(*v));
      }
      case Command::SetModel: {
        auto req = decode_set_model(p);
        auto spec = parse_model(req.blob, req.key, req.device_hint);
        state.set_model(std::move(req.key), std::move(spec));
        return make_response(request, Status::Ok);
      }
      case Command::GetModel: {
        auto m = state.get_model(decode_key_request(p));
        if (!m) return make_error_response(request, Status::NotFound, "no such model");
        return make_response(request, Status::Ok, m->blob);
      }
      case Command::RunModel: {
        state.run_model(decode_run_model(p));
        return make_response(request, Status::Ok);
      }
      case Command::Info:
        return make_response(request, Status::Ok, encode_info(state.info()));
      case Command::Flush:
        state.flush();
        return make_response(request, Status::Ok);
    }
  } catch (const Error& e) {
    return make_error_response(request, e.status(), e.what());
  } catch (const std::bad_alloc&) {
    return make_error_response(request, Status::OutOfMemory, "allocation failed");
  } catch (const std::exception& e) {
    return make_error_response(request, Status::Internal, e.what());
  }
  return make_error_response(request, Status::Internal, "unreachable");
}

// ---------------------------------------------------------------------------
// Server

bool apply_cpu_affinity(const std::vector<int>& cpus) {
#if defined(__linux__)
  if (cpus.empty()) return false;
  cpu_set_t available;
  CPU_ZERO(&available);
  if (sched_getaffinity(0, sizeof available, &available) != 0) return false;
  cpu_set_t set;
  CPU_ZERO(&set);
  int n = 0;
  for (int c : cpus) {
    if (c >= 0 && c < CPU_SETSIZE && CPU_ISSET(c, &available)) {
      CPU_SET(c, &set);
      ++n;
    }
  }
  if (n == 0) return false;
  return sched_setaffinity(0, sizeof set, &set) == 0;
#else
  (void)cpus;
  return false;
#endif
}

struct StoreServer::Impl {
  struct Conn {
    std::uint64_t id = 0;
    net::Socket sock;
    std::jthread thread;
    std::atomic<bool> done{false};
  };

  Impl(unsigned workers) : permits(static_cast<std::ptrdiff_t>(workers)) {}

  net::Socket listener;
  int wake_fd = -1;
  std::atomic<bool> stopping{false};
  std::counting_semaphore<4096> permits;
  std::mutex conns_mu;
  std::list<Conn> conns;
  std::mutex log_mu;
  std::uint64_t next_conn = 0;
};

StoreServer::StoreServer(StoreConfig config, const HostPort& bind)
    : config_(std::move(config)), state_(config_.max_bytes), host_(bind.host) {
  unsigned workers = config_.workers ? config_.workers : std::thread::hardware_concurrency();
  workers = std::clamp(workers, 1u, 4096u);
  impl_ = std::make_unique<Impl>(workers);
  impl_->listener = net::listen_tcp(bind);
  port_ = net::local_port(impl_->listener);
  impl_->wake_fd = ::eventfd(0, EFD_CLOEXEC | EFD_NONBLOCK);
}

StoreServer::~StoreServer() {
  stop();
  {
    std::lock_guard lock(impl_->conns_mu);
    for (auto& c : impl_->conns) c.sock.shutdown();
  }
  impl_->conns.clear();  // joins
  if (impl_->wake_fd >= 0) ::close(impl_->wake_fd);
}

void StoreServer::stop() {
  if (impl_->stopping.exchange(true)) return;
  std::uint64_t one = 1;
  [[maybe_unused]] auto n = ::write(impl_->wake_fd, &one, sizeof one);
}

namespace {

void log_request(std::FILE* out, std::mutex& mu, std::uint64_t conn, std::uint8_t command,
                 Status status, std::size_t bytes, std::int64_t micros) {
  const auto ts = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
  const auto cmd = command_from_code(command);
  std::lock_guard lock(mu);
  std::fprintf(out,
               "{\"ts\":%lld,\"conn\":%llu,\"command\":\"%s\",\"status\":\"%s\",\"bytes\":%zu,"
               "\"micros\":%lld}\n",
               static_cast<long long>(ts), static_cast<unsigned long long>(conn),
               cmd ? std::string(to_string(*cmd)).c_str() : "UNKNOWN",
               std::string(to_string(status)).c_str(), bytes, static_cast<long long>(micros));
}

}  // namespace

void StoreServer::run() {
  auto& im = *impl_;
  auto serve = [this, &im](Impl::Conn& conn) {
    FrameDecoder decoder(config_.max_frame_payload);
    std::vector<std::uint8_t> buf(256 * 1024);
    try {
      for (;;) {
        const std::size_t n = net::recv_some(conn.sock, buf);
        if (n == 0) break;
        try {
          decoder.feed(ByteView(buf.data(), n));
          while (auto frame = decoder.next()) {
            const auto t0 = std::chrono::steady_clock::now();
            im.permits.acquire();
            Frame resp;
            try {
              resp = handle_request(state_, *frame);
            } catch (...) {
              im.permits.release();
              throw;
            }
            im.permits.release();
            net::send_all(conn.sock, encode_frame(resp, std::numeric_limits<std::size_t>::max()));
            if (config_.request_log) {
              const auto us = std::chrono::duration_cast<std::chrono::microseconds>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
              log_request(config_.request_log, im.log_mu, conn.id, frame->command,
                          static_cast<Status>(resp.payload.front()),
                          frame->payload.size() + resp.payload.size(), us);
            }
          }
        } catch (const Error& e) {
          // Framing is unrecoverable on this stream: report and drop it.
          Frame bad;
          net::send_all(conn.sock, encode_frame(make_error_response(bad, e.status(), e.what())));
          break;
        }
      }
    } catch (const std::exception&) {
      // Peer went away mid-request; nothing to report to.
    }
    conn.sock.shutdown();
    conn.done = true;
  };

  while (!im.stopping) {
    pollfd fds[2] = {{im.listener.fd(), POLLIN, 0}, {im.wake_fd, POLLIN, 0}};
    const int rc = ::poll(fds, 2, 1000);
    if (rc < 0 && errno != EINTR) break;
    {
      // Reap finished connections.
      std::lock_guard lock(im.conns_mu);
      im.conns.remove_if([](const Impl::Conn& c) { return c.done.load(); });
    }
    if (rc <= 0 || !(fds[0].revents & POLLIN)) continue;
    net::Socket s(::accept4(im.listener.fd(), nullptr, nullptr, SOCK_CLOEXEC));
    if (!s.valid()) continue;
    net::set_nodelay(s);
    std::lock_guard lock(im.conns_mu);
    auto& conn = im.conns.emplace_back();
    conn.id = im.next_conn++;
    conn.sock = std::move(s);
    conn.thread = std::jthread([&serve, &conn] { serve(conn); });
  }

  std::list<Impl::Conn> finished;
  {
    std::lock_guard lock(im.conns_mu);
    for (auto& c : im.conns) c.sock.shutdown();
    finished.splice(finished.end(), im.conns);
  }
  finished.clear();  // joins every connection thread
  if (config_.request_log) std::fflush(config_.request_log);
}

}  // namespace isf
