#include "isf/orchestrator.hpp"

#include <fcntl.h>
#include <sched.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include "isf/reproducers.hpp"
#include "isf/timings.hpp"

extern char** environ;

namespace isf {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

std::atomic<bool> g_stop{false};

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string exe_for(const DeploymentPlan& plan, const std::string& role) {
  if (role == "store") return "store";
  if (role == "consumer") return "consumer";
  return plan.workload.mode == WorkloadMode::Inference ? "infer" : "producer";
}

pid_t spawn(const ProcessEntry& p, const fs::path& exe) {
  std::vector<std::string> env_strings;
  for (char** e = environ; *e; ++e) {
    if (std::strncmp(*e, "ISF_", 4) != 0) env_strings.emplace_back(*e);
  }
  for (const auto& [k, v] : p.env) env_strings.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);

  std::vector<std::string> args = p.argv;
  args.insert(args.begin(), exe.string());
  std::vector<char*> argv;
  for (auto& s : args) argv.push_back(s.data());
  argv.push_back(nullptr);

  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_addopen(&fa, 0, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_addopen(&fa, 1, p.log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&fa, 1, 2);

  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  sigset_t none, defaults;
  sigemptyset(&none);
  sigemptyset(&defaults);
  sigaddset(&defaults, SIGINT);
  sigaddset(&defaults, SIGTERM);
  sigaddset(&defaults, SIGPIPE);
  posix_spawnattr_setsigmask(&attr, &none);
  posix_spawnattr_setsigdefault(&attr, &defaults);
  posix_spawnattr_setpgroup(&attr, 0);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP | POSIX_SPAWN_SETSIGMASK | POSIX_SPAWN_SETSIGDEF);

  pid_t pid = -1;
  const int rc = posix_spawn(&pid, exe.c_str(), &fa, &attr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&fa);
  posix_spawnattr_destroy(&attr);
  if (rc != 0) throw LaunchError("cannot spawn " + exe.string() + ": " + std::strerror(rc));
  return pid;
}

void record_exit(ProcessEntry& p, int wstatus) {
  if (WIFEXITED(wstatus)) {
    p.exit_code = WEXITSTATUS(wstatus);
    if (p.status == "running") p.status = p.exit_code == 0 ? "ok" : "failed";
  } else if (WIFSIGNALED(wstatus)) {
    p.term_signal = WTERMSIG(wstatus);
    if (p.status == "running") p.status = "failed";
  }
  p.reaped = true;
}

bool reap(ProcessEntry& p, bool block) {
  if (p.reaped || p.pid <= 0) return true;
  int ws = 0;
  const pid_t r = ::waitpid(p.pid, &ws, block ? 0 : WNOHANG);
  if (r == p.pid) {
    record_exit(p, ws);
    return true;
  }
  if (r < 0 && errno == ECHILD) {
    p.reaped = true;
    if (p.status == "running") p.status = "failed";
    return true;
  }
  return false;
}

void signal_group(const ProcessEntry& p, int sig) {
  if (!p.reaped && p.pid > 0) ::kill(-p.pid, sig);
}

// TERM, grace period, then KILL for every live entry matching `pred`.
template <class Pred>
void terminate(std::vector<ProcessEntry>& procs, Pred pred, const std::string& mark, std::chrono::milliseconds grace) {
  for (auto& p : procs) {
    if (!p.reaped && pred(p)) {
      if (!mark.empty()) p.status = mark;
      signal_group(p, SIGTERM);
    }
  }
  const auto deadline = std::chrono::steady_clock::now() + grace;
  while (std::chrono::steady_clock::now() < deadline) {
    bool alive = false;
    for (auto& p : procs) {
      if (pred(p) && !reap(p, false)) alive = true;
    }
    if (!alive) break;
    std::this_thread::sleep_for(10ms);
  }
  for (auto& p : procs) {
    if (!p.reaped && pred(p)) {
      signal_group(p, SIGKILL);
      p.status = "killed";
      reap(p, true);
    }
  }
}

bool log_has_ready(const fs::path& log) {
  std::ifstream in(log);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("READY ", 0) == 0) return true;
  }
  return false;
}

std::string tail_of(const fs::path& log) {
  std::ifstream in(log);
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  return last;
}

std::size_t available_cpus() {
  cpu_set_t set;
  CPU_ZERO(&set);
  if (sched_getaffinity(0, sizeof set, &set) != 0) return 1;
  return static_cast<std::size_t>(CPU_COUNT(&set));
}

}  // namespace

void request_stop() noexcept { g_stop.store(true); }
void clear_stop() noexcept { g_stop.store(false); }

std::string make_run_id() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  localtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  static std::atomic<int> seq{0};
  return std::string("r") + buf + "-" + std::to_string(::getpid()) + "-" + std::to_string(seq++);
}

std::chrono::milliseconds default_timeout(const DeploymentPlan& plan) {
  const auto& w = plan.workload;
  const std::uint64_t loop_ms = w.total_steps() * (std::uint64_t{w.sleep_ms} + w.train_ms);
  return std::chrono::milliseconds(60000 + 4 * loop_ms);
}

std::vector<const ProcessEntry*> RunManifest::with_role(std::string_view role) const {
  std::vector<const ProcessEntry*> out;
  for (const auto& p : processes) {
    if (p.role == role) out.push_back(&p);
  }
  return out;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json procs = nlohmann::json::array();
  for (const auto& p : processes) {
    nlohmann::json e{
        {"role", p.role},   {"node", p.node},       {"rank", p.rank},
        {"pid", p.pid},   {"status", p.status}, {"exit_code", p.exit_code},
        {"signal", p.term_signal}, {"argv", p.argv}, {"env", p.env},
        {"log", p.log.string()}, {"csv", p.csv.string()},
    };
    if (!p.address.empty()) e["address"] = p.address;
    procs.push_back(std::move(e));
  }
  return nlohmann::json{
      {"run_id", run_id},
      {"plan", isf::to_json(plan)},
      {"artifact_dir", artifact_dir.string()},
      {"start_at_ms", start_at_ms},
      {"affinity_applied", affinity_applied},
      {"processes", procs},
  };
}

void RunManifest::write() const {
  const auto path = artifact_dir / "manifest.json";
  std::ofstream out(path);
  out << to_json().dump(2) << "\n";
  if (!out) throw LaunchError("cannot write " + path.string());
}

RunManifest launch(const DeploymentPlan& plan, const fs::path& out, const LaunchOptions& opts) {
  plan.validate();
  for (const char* exe : {"store", exe_for(plan, "producer") == "infer" ? "infer" : "producer", "consumer"}) {
    const auto p = opts.bin_dir / exe;
    if (::access(p.c_str(), X_OK) != 0) throw LaunchError("executable missing: " + p.string());
  }

  RunManifest m;
  m.run_id = opts.run_id.empty() ? make_run_id() : opts.run_id;
  m.plan = plan;
  fs::create_directories(out / "logs");
  fs::create_directories(out / "csv");
  m.artifact_dir = fs::absolute(out);

  WorkloadSpec spec = plan.workload;
  if (spec.model_file) spec.model_file = fs::absolute(*spec.model_file).string();
  m.plan.workload = spec;
  const auto spec_path = m.artifact_dir / "workload.json";
  {
    std::ofstream f(spec_path);
    f << isf::to_json(spec).dump(2) << "\n";
    if (!f) throw LaunchError("cannot write " + spec_path.string());
  }

  auto abort_run = [&](const std::string& why) -> LaunchError {
    terminate(m.processes, [](const ProcessEntry&) { return true; }, "killed", 2000ms);
    try {
      m.write();
    } catch (...) {
    }
    return LaunchError(why);
  };

  // Stores.
  const std::uint32_t stores = plan.store_count();
  const std::size_t cpus = available_cpus();
  m.affinity_applied = std::size_t{stores} * plan.db_cores <= cpus && cpus > 1;
  for (std::uint32_t i = 0; i < stores; ++i) {
    ProcessEntry p;
    p.role = "store";
    p.node = i;
    p.rank = i;
    p.address = plan.store_address(i);
    p.argv = {"--bind", p.address, "--workers", std::to_string(plan.db_cores), "--max-bytes",
              std::to_string(plan.store_max_bytes)};
    if (m.affinity_applied) {
      std::string list;
      for (std::uint32_t c = 0; c < plan.db_cores; ++c) {
        if (!list.empty()) list += ",";
        list += std::to_string(i * plan.db_cores + c);
      }
      p.argv.insert(p.argv.end(), {"--cpus", list});
    }
    p.env = {{kRunIdEnv, m.run_id}, {kNodeEnv, std::to_string(i)}};
    p.log = m.artifact_dir / "logs" / ("store-" + std::to_string(p.node) + "-" + std::to_string(p.rank) + ".log");
    m.processes.push_back(p);
    try {
      m.processes.back().pid = spawn(p, opts.bin_dir / "store");
    } catch (const LaunchError& e) {
      m.processes.pop_back();
      throw abort_run(e.what());
    }
  }

  const auto deadline = std::chrono::steady_clock::now() + opts.ready_timeout;
  for (auto& p : m.processes) {
    while (!log_has_ready(p.log)) {
      if (g_stop.load()) throw abort_run("interrupted while waiting for stores");
      if (reap(p, false)) {
        throw abort_run("store " + p.address + " exited before READY: " + tail_of(p.log));
      }
      if (std::chrono::steady_clock::now() > deadline) {
        throw abort_run("store " + p.address + " not READY within " + std::to_string(opts.ready_timeout.count()) +
                        " ms");
      }
      std::this_thread::sleep_for(5ms);
    }
  }

  // Ranks.
  const std::uint32_t producers = plan.producer_count();
  const std::uint32_t consumers = plan.consumer_count();
  const auto delay = opts.start_delay.count() > 0
                         ? opts.start_delay
                         : std::chrono::milliseconds(300 + 25 * (producers + consumers));
  m.start_at_ms = now_ms() + delay.count();
  const std::string shard_map = plan.shard_map().to_string();

  auto discovery = [&](std::uint32_t node_index, std::map<std::string, std::string>& env) {
    if (plan.mode == DeploymentMode::Colocated) {
      env[kAddrEnv] = plan.store_address(node_index);
    } else {
      env[kShardMapEnv] = shard_map;
    }
    std::int64_t start = m.start_at_ms;
    if (plan.stagger_nodes) start += std::int64_t{node_index} * plan.workload.sleep_ms / plan.nodes;
    env[kStartAtEnv] = std::to_string(start);
  };

  auto add_rank = [&](const std::string& role, std::uint32_t node_index, std::int64_t rank,
                      std::vector<std::string> extra) {
    ProcessEntry p;
    p.role = role;
    p.node = plan.producer_virtual_node(node_index);
    p.rank = rank;
    p.csv = m.artifact_dir / "csv" / (role + "-" + std::to_string(rank) + ".csv");
    p.log = m.artifact_dir / "logs" / (role + "-" + std::to_string(p.node) + "-" + std::to_string(rank) + ".log");
    p.argv = {"--spec", spec_path.string(), "--rank", std::to_string(rank), "--run-id", m.run_id,
              "--csv", p.csv.string()};
    p.argv.insert(p.argv.end(), extra.begin(), extra.end());
    p.env = {{kRunIdEnv, m.run_id},
             {kRankEnv, std::to_string(rank)},
             {kNumRanksEnv, std::to_string(producers)},
             {kNodeEnv, std::to_string(p.node)}};
    discovery(node_index, p.env);
    m.processes.push_back(p);
    try {
      m.processes.back().pid = spawn(p, opts.bin_dir / exe_for(plan, role));
    } catch (const LaunchError& e) {
      m.processes.pop_back();
      throw abort_run(e.what());
    }
  };

  for (std::uint32_t r = 0; r < producers; ++r) {
    if (g_stop.load()) throw abort_run("interrupted during launch");
    add_rank("producer", r / plan.ranks_per_node, r, {});
  }
  for (std::uint32_t c = 0; c < consumers; ++c) {
    if (g_stop.load()) throw abort_run("interrupted during launch");
    std::string list;
    for (auto r : plan.producers_for_consumer(c)) {
      if (!list.empty()) list += ",";
      list += std::to_string(r);
    }
    // Consumer ranks follow the producer ranks so CSV rank ids stay unique.
    add_rank("consumer", c / plan.consumer_ranks_per_node, std::int64_t{producers} + c, {"--producers", list});
  }
  m.write();
  return m;
}

RunSummary await_completion(RunManifest& m, std::chrono::milliseconds timeout, const InspectHook& hook) {
  RunSummary s;
  auto is_client = [](const ProcessEntry& p) { return p.role != "store"; };
  auto is_store = [](const ProcessEntry& p) { return p.role == "store"; };
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    bool alive = false;
    for (auto& p : m.processes) {
      if (is_client(p) && !reap(p, false)) alive = true;
    }
    if (!alive) break;
    if (g_stop.load() || std::chrono::steady_clock::now() > deadline) {
      s.timed_out = true;
      terminate(m.processes, is_client, "killed", 2000ms);
      break;
    }
    std::this_thread::sleep_for(10ms);
  }

  if (hook) {
    try {
      hook(m);
    } catch (const std::exception& e) {
      s.hook_error = e.what();
    }
  }

  // Stores go last. A store that dies on its own before this point failed.
  for (auto& p : m.processes) {
    if (is_store(p)) reap(p, false);
  }
  terminate(m.processes, is_store, "", 5000ms);

  for (const auto& p : m.processes) {
    if (p.status == "killed") ++s.killed;
    if (is_client(p) && p.status != "ok") ++s.clients_failed;
    if (is_store(p) && p.status != "ok") ++s.stores_failed;
  }

  try {
    auto rows = merge_timing_csvs(m.artifact_dir / "csv");
    s.merged_rows = rows.size();
    s.timings_csv = m.artifact_dir / "timings.csv";
    write_timings_csv(s.timings_csv, rows);
  } catch (const CsvSchemaError& e) {
    if (s.hook_error.empty()) s.hook_error = std::string("timing merge: ") + e.what();
  }
  s.ok = s.clients_failed == 0 && s.stores_failed == 0 && !s.timed_out && s.hook_error.empty();
  m.write();
  return s;
}

namespace {

bool is_zombie(pid_t pid) {
  std::ifstream stat("/proc/" + std::to_string(pid) + "/stat");
  std::string line;
  std::getline(stat, line);
  const auto close = line.rfind(')');
  return close != std::string::npos && close + 2 < line.size() && line[close + 2] == 'Z';
}

}  // namespace

std::vector<pid_t> surviving_processes(const RunManifest& m) {
  std::vector<pid_t> out;
  std::vector<pid_t> groups;
  for (const auto& p : m.processes) {
    const pid_t pid = p.pid;
    if (pid <= 0) continue;
    groups.push_back(pid);
    if (::kill(pid, 0) == 0) {
      // A zombie still answers kill(0); it only counts if it is not ours to reap.
      if (is_zombie(pid) && !p.reaped) continue;
      out.push_back(pid);
    }
  }
  for (const auto& e : fs::directory_iterator("/proc")) {
    const auto name = e.path().filename().string();
    if (name.empty() || name.find_first_not_of("0123456789") != std::string::npos) continue;
    const pid_t pid = static_cast<pid_t>(std::stol(name));
    const pid_t pgid = ::getpgid(pid);
    // Grandchildren reparented to an init that never reaps linger as zombies.
    if (pgid < 0 || is_zombie(pid)) continue;
    for (pid_t g : groups) {
      if (pgid == g && std::find(out.begin(), out.end(), pid) == out.end()) out.push_back(pid);
    }
  }
  return out;
}

}  // namespace isf
