// store --bind HOST:PORT [--max-bytes N] [--workers K] [--cpus LIST]

#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "isf/store.hpp"

namespace {

std::vector<int> parse_cpu_list(const std::string& s) {
  // "0,2,4-7"
  std::vector<int> cpus;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      cpus.push_back(std::stoi(item));
    } else {
      const int lo = std::stoi(item.substr(0, dash));
      const int hi = std::stoi(item.substr(dash + 1));
      for (int c = lo; c <= hi; ++c) cpus.push_back(c);
    }
  }
  return cpus;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-memory tensor store"};
  std::string bind;
  std::uint64_t max_bytes = std::uint64_t{4} << 30;
  unsigned workers = 0;
  std::string cpus;
  bool quiet = false;
  app.add_option("--bind", bind, "HOST:PORT to listen on")->required();
  app.add_option("--max-bytes", max_bytes, "Capacity for tensor and model bytes");
  app.add_option("--workers", workers, "Concurrently executing requests (0 = all cores)");
  app.add_option("--cpus", cpus, "CPU affinity list, e.g. 0-3,8");
  app.add_flag("--quiet", quiet, "Do not emit per-request log lines");
  CLI11_PARSE(app, argc, argv);

  // Termination signals are taken synchronously by a dedicated thread.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  isf::StoreConfig config;
  config.max_bytes = max_bytes;
  config.workers = workers;
  if (!cpus.empty()) {
    try {
      config.cpus = parse_cpu_list(cpus);
    } catch (const std::exception&) {
      std::cerr << "store: bad --cpus list '" << cpus << "'\n";
      return 2;
    }
    if (!isf::apply_cpu_affinity(config.cpus)) {
      std::cerr << "store: cpu affinity '" << cpus << "' not applied on this machine\n";
    }
  }
  if (!quiet) config.request_log = stdout;

  std::unique_ptr<isf::StoreServer> server;
  try {
    server = std::make_unique<isf::StoreServer>(config, isf::parse_host_port(bind));
  } catch (const std::exception& e) {
    std::cerr << "store: " << e.what() << '\n';
    return 1;
  }

  std::jthread signal_waiter([&server, sigs] {
    int sig = 0;
    sigwait(&sigs, &sig);
    server->stop();
  });

  std::printf("READY %s\n", server->address().c_str());
  std::fflush(stdout);
  server->run();
  std::fflush(stdout);
  // run() only returns after stop(), which the signal thread triggered (or a
  // fatal poll error). Make sure the waiter can exit in the latter case.
  pthread_kill(signal_waiter.native_handle(), SIGTERM);
  return 0;
}
