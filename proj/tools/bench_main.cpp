// bench run --experiment E3 --out results/ [--paper-scale]
// bench check --report results/E3/report.json
// bench merge --dir run/csv

#include <csignal>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "isf/bench.hpp"

namespace fs = std::filesystem;

namespace {

extern "C" void on_signal(int) { isf::request_stop(); }

fs::path self_dir() {
  std::error_code ec;
  const auto exe = fs::read_symlink("/proc/self/exe", ec);
  return ec ? fs::current_path() : exe.parent_path();
}

fs::path experiment_path(const std::string& name) {
  if (fs::exists(name)) return name;
  return fs::path(ISF_EXPERIMENTS_DIR) / (name + ".json");
}

int print_verdicts(const isf::bench::ScalingReport& r) {
  int failed = 0;
  for (const auto& v : r.verdicts) {
    std::cout << v.status << "  " << v.name << "  measured=" << v.measured << " threshold=" << v.threshold << "  "
              << v.detail << "\n";
    if (v.status == "FAIL" || v.status == "INCONCLUSIVE") ++failed;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace isf;
  CLI::App app{"Runs experiment sweeps and checks their scaling properties"};
  app.require_subcommand(1);

  std::vector<std::string> experiments;
  std::string out = "results", bin_dir, report_path, raw_dir;
  bool paper_scale = false;
  auto* run = app.add_subcommand("run", "run experiment sweeps");
  run->add_option("--experiment,-e", experiments, "experiment id (E1..E7) or JSON path")->required();
  run->add_option("--out", out, "results directory");
  run->add_option("--bin-dir", bin_dir, "directory with the rank and store executables");
  run->add_flag("--paper-scale", paper_scale, "use the experiment's full-size variant");

  auto* check = app.add_subcommand("check", "re-evaluate an existing report.json");
  check->add_option("--report", report_path, "report.json")->required();

  auto* merge = app.add_subcommand("merge", "merge a directory of timing CSVs and plot it");
  merge->add_option("--dir", raw_dir, "directory with CSVs")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    if (merge->parsed()) {
      std::cout << bench::merge_and_plot(raw_dir) << " rows merged into " << (fs::path(raw_dir) / "merged.csv") << "\n";
      return 0;
    }
    if (check->parsed()) {
      auto r = bench::ScalingReport::from_json(read_json_file(report_path));
      r.verdicts = bench::check_properties(r, r.thresholds);
      return print_verdicts(r);
    }
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    bench::BenchOptions opts;
    opts.bin_dir = bin_dir.empty() ? self_dir() : fs::path(bin_dir);
    opts.log = &std::cerr;
    int rc = 0;
    for (const auto& e : experiments) {
      const auto spec = bench::load_experiment(experiment_path(e), paper_scale);
      const auto r = bench::run_experiment(spec, out, opts);
      std::cout << "== " << r.id << ": " << r.title << "\n";
      rc |= print_verdicts(r);
    }
    return rc;
  } catch (const PlanError& e) {
    std::cerr << "bench: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "bench: " << e.what() << "\n";
    return 1;
  }
}
