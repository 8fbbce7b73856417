// orchestrate run --plan plan.json --out artifacts/
// orchestrate validate --plan plan.json

#include <csignal>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "isf/orchestrator.hpp"

namespace {

extern "C" void on_signal(int) { isf::request_stop(); }

std::filesystem::path self_dir() {
  std::error_code ec;
  const auto exe = std::filesystem::read_symlink("/proc/self/exe", ec);
  return ec ? std::filesystem::current_path() : exe.parent_path();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace isf;
  CLI::App app{"Launches a deployment plan as local virtual nodes"};
  app.require_subcommand(1);

  std::string plan_path, out_dir, bin_dir, run_id;
  double timeout_s = 0;
  auto* run = app.add_subcommand("run", "launch a plan and wait for it");
  run->add_option("--plan", plan_path, "plan JSON")->required();
  run->add_option("--out", out_dir, "artifact directory")->required();
  run->add_option("--bin-dir", bin_dir, "directory with store/producer/consumer/infer");
  run->add_option("--run-id", run_id, "run id (default: generated)");
  run->add_option("--timeout", timeout_s, "seconds before the run is killed (default: from the plan)");

  auto* validate = app.add_subcommand("validate", "check a plan without launching");
  validate->add_option("--plan", plan_path, "plan JSON")->required();
  CLI11_PARSE(app, argc, argv);

  DeploymentPlan plan;
  try {
    plan = plan_from_file(plan_path);
  } catch (const PlanError& e) {
    std::cerr << "orchestrate: invalid plan: " << e.what() << "\n";
    return 2;
  }
  if (validate->parsed()) {
    std::cout << plan_path << ": ok (" << to_string(plan.mode) << ", " << plan.store_count() << " stores, "
              << plan.producer_count() << " producers, " << plan.consumer_count() << " consumers)\n";
    return 0;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  LaunchOptions opts;
  opts.bin_dir = bin_dir.empty() ? self_dir() : std::filesystem::path(bin_dir);
  opts.run_id = run_id;
  RunManifest m;
  try {
    m = launch(plan, out_dir, opts);
  } catch (const std::exception& e) {
    std::cerr << "orchestrate: launch failed: " << e.what() << "\n";
    return 1;
  }
  std::cout << "run " << m.run_id << ": " << m.processes.size() << " processes launched\n" << std::flush;

  const auto timeout = timeout_s > 0 ? std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000))
                                     : default_timeout(plan);
  const auto s = await_completion(m, timeout);
  std::cout << "run " << m.run_id << ": " << (s.ok ? "ok" : "FAILED") << ", " << s.clients_failed
            << " ranks failed, " << s.killed << " killed, " << s.stores_failed << " stores failed, "
            << s.merged_rows << " timing rows\n";
  if (!s.hook_error.empty()) std::cout << "  " << s.hook_error << "\n";
  for (const auto& p : m.processes) {
    if (p.status != "ok") std::cout << "  " << p.role << " " << p.rank << ": " << p.status << " (" << p.log.string() << ")\n";
  }
  const auto left = surviving_processes(m);
  if (!left.empty()) {
    std::cout << "  " << left.size() << " processes survived teardown\n";
    return 1;
  }
  return s.ok ? 0 : 1;
}
