#include "isf/bench.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>

#include "isf/client.hpp"
#include "isf/exec.hpp"
#include "isf/reproducers.hpp"
#include "isf/svg.hpp"

namespace isf::bench {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& msg) { throw PlanError(where + ": " + msg); }

void reject_unknown(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> known) {
  if (!j.is_object()) fail(where, "expected an object");
  for (const auto& [k, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; })) fail(where + "." + k, "unknown field");
  }
}

nlohmann::json stats_json(const OpStats& s) {
  return {{"mean_sec", s.mean_sec}, {"std_sec", s.std_sec}, {"ranks", s.ranks},     {"ops", s.ops},
          {"mean_op_sec", s.mean_op_sec}, {"bytes", s.bytes}, {"mean_iter_sec", s.mean_iter_sec}};
}

OpStats stats_from_json(const std::string& name, const nlohmann::json& j) {
  OpStats s;
  s.component = name;
  s.mean_sec = j.at("mean_sec").get<double>();
  s.std_sec = j.at("std_sec").get<double>();
  s.ranks = j.at("ranks").get<std::size_t>();
  s.ops = j.at("ops").get<std::size_t>();
  s.mean_op_sec = j.at("mean_op_sec").get<double>();
  s.bytes = j.at("bytes").get<std::uint64_t>();
  s.mean_iter_sec = j.at("mean_iter_sec").get<double>();
  return s;
}

nlohmann::json stats_map_json(const std::map<std::string, OpStats>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) j[k] = stats_json(v);
  return j;
}

std::map<std::string, OpStats> stats_map_from_json(const nlohmann::json& j) {
  std::map<std::string, OpStats> m;
  for (const auto& [k, v] : j.items()) m.emplace(k, stats_from_json(k, v));
  return m;
}

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
double num_from(const nlohmann::json& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

Verdict verdict(std::string name, bool pass, double measured, double threshold, std::string detail) {
  return Verdict{std::move(name), pass ? "PASS" : "FAIL", measured, threshold, std::move(detail)};
}

Verdict inconclusive(std::string name, std::string detail) {
  return Verdict{std::move(name), "INCONCLUSIVE", std::nan(""), std::nan(""), std::move(detail)};
}

double stat(const PointResult& p, const std::string& comp, double OpStats::*field) {
  auto it = p.stats.find(comp);
  return it == p.stats.end() ? std::nan("") : it->second.*field;
}

std::vector<const PointResult*> by_x(const ScalingReport& r, const std::string& series = {}) {
  std::vector<const PointResult*> out;
  for (const auto& p : r.points) {
    if (series.empty() || p.series == series) out.push_back(&p);
  }
  std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->x < b->x; });
  return out;
}

template <class T>
T th(const nlohmann::json& t, const char* key) {
  if (!t.contains(key)) throw std::invalid_argument(std::string("threshold \"") + key + "\" missing");
  return t.at(key).get<T>();
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Experiment files

DeploymentPlan ExperimentSpec::plan_for(const SweepPoint& p) const {
  nlohmann::json j = base_plan;
  j.merge_patch(p.set);
  try {
    return plan_from_json(j);
  } catch (const PlanError& e) {
    throw PlanError(id + " point \"" + p.label + "\": " + e.what());
  }
}

ExperimentSpec load_experiment(const fs::path& path, bool paper_scale) {
  nlohmann::json j = read_json_file(path);
  const std::string where = path.filename().string();
  reject_unknown(j, where,
                 {"id", "title", "x_label", "log_x", "log_y", "repetitions", "base_plan", "sweep", "thresholds", "model",
                  "components", "paper_scale", "notes"});
  if (paper_scale) {
    if (!j.contains("paper_scale")) fail(where, "no paper_scale variant for this experiment");
    const auto patch = j.at("paper_scale");
    reject_unknown(patch, where + ".paper_scale", {"base_plan", "sweep", "thresholds", "notes"});
    for (const char* k : {"base_plan", "thresholds"}) {
      if (patch.contains(k)) j[k].merge_patch(patch.at(k));
    }
    if (patch.contains("sweep")) j["sweep"] = patch.at("sweep");
  }

  ExperimentSpec s;
  s.paper_scale = paper_scale;
  try {
    s.id = j.at("id").get<std::string>();
    s.title = j.value("title", s.id);
    s.x_label = j.value("x_label", "x");
    s.log_x = j.value("log_x", false);
    s.log_y = j.value("log_y", false);
    s.repetitions = j.value("repetitions", 1u);
    s.base_plan = j.at("base_plan");
    s.thresholds = j.value("thresholds", nlohmann::json::object());
    if (j.contains("components")) s.components = j.at("components").get<std::vector<std::string>>();
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown(m, where + ".model", {"type", "in", "out", "hidden", "seed"});
      ModelGen g;
      g.type = m.value("type", "affine");
      g.in = m.value("in", 0u);
      g.out = m.value("out", 0u);
      g.hidden = m.value("hidden", std::vector<std::uint32_t>{});
      g.seed = m.value("seed", std::uint64_t{1});
      s.model = g;
    }
    for (const auto& p : j.at("sweep")) {
      reject_unknown(p, where + ".sweep", {"label", "x", "series", "set"});
      SweepPoint sp;
      sp.label = p.at("label").get<std::string>();
      sp.x = p.at("x").get<double>();
      sp.series = p.value("series", "");
      sp.set = p.value("set", nlohmann::json::object());
      s.points.push_back(std::move(sp));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(where, e.what());
  }
  if (s.repetitions < 1) fail(where + ".repetitions", "must be at least 1");
  if (s.points.empty()) fail(where + ".sweep", "no sweep points");
  std::set<std::string> labels;
  for (const auto& p : s.points) {
    if (!labels.insert(p.label).second) fail(where + ".sweep", "duplicate label \"" + p.label + "\"");
    DeploymentPlan plan = [&] {
      if (!s.model) return s.plan_for(p);
      // The model file is generated at run time; validate with a placeholder.
      SweepPoint q = p;
      q.set["workload"]["model_file"] = "model.mex";
      return s.plan_for(q);
    }();
    (void)plan;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Measurements

std::map<std::string, OpStats> component_stats(const std::vector<CsvRow>& rows) {
  auto stats = aggregate(rows);
  std::vector<CsvRow> transfer;
  for (const auto& r : rows) {
    if (r.component == "send" || r.component == "retrieve") {
      transfer.push_back(r);
      transfer.back().component = "transfer";
    }
  }
  if (!transfer.empty()) {
    auto t = aggregate(transfer);
    if (t.count("transfer")) stats["transfer"] = t.at("transfer");
  }
  return stats;
}

Locality inspect_placement(const RunManifest& m, std::vector<std::int64_t>* store_keys) {
  Locality loc;
  const auto& plan = m.plan;
  const auto& w = plan.workload;
  const auto stores = m.with_role("store");
  std::vector<Client> clients;
  for (const auto* s : stores) {
    ClientConfig cfg;
    cfg.shards = ShardMap({s->address});
    cfg.max_attempts = 3;
    clients.push_back(Client::connect(cfg));
  }
  if (store_keys) {
    store_keys->clear();
    for (auto& c : clients) {
      std::int64_t keys = -1;
      for (const auto& [k, v] : c.info(0)) {
        if (k == "keys") keys = std::get<std::int64_t>(v);
      }
      store_keys->push_back(keys);
    }
  }
  if (w.mode == WorkloadMode::Inference) return loc;

  std::uint64_t last = 0;
  for (std::uint64_t step = 0; step < w.total_steps(); ++step) {
    if (step % w.send_every == 0) last = step;
  }
  for (const auto* p : m.with_role("producer")) {
    if (p->status != "ok") continue;
    const auto key = producer_key(static_cast<std::uint64_t>(p->rank), "sol", last);
    const std::size_t expected = plan.mode == DeploymentMode::Colocated
                                     ? static_cast<std::size_t>(p->rank) / plan.ranks_per_node
                                     : shard_for_key(key, plan.store_count());
    for (std::size_t i = 0; i < clients.size(); ++i) {
      const bool here = clients[i].tensor_exists(key);
      ++loc.checked;
      if (here != (i == expected)) ++loc.violations;
    }
  }
  return loc;
}

std::uint64_t expected_rows(const DeploymentPlan& plan) {
  if (plan.consumer_count() > 0) return 0;
  const auto& w = plan.workload;
  const std::uint64_t steps = w.total_steps();
  std::uint64_t per_rank = 0;
  if (w.mode == WorkloadMode::Inference) {
    if (w.inline_eval) {
      per_rank = 2 * steps;
    } else {
      per_rank = 2 + steps * 5 + (w.retain_steps > 0 ? 2 * steps : 0);
    }
  } else {
    const std::uint64_t sends = (steps + w.send_every - 1) / w.send_every;
    const std::uint64_t deletes = w.retain_steps > 0 && sends > w.retain_steps ? sends - w.retain_steps : 0;
    per_rank = 1 + steps + sends * (w.mode == WorkloadMode::Transfer ? 5 : 4) + deletes;
  }
  return per_rank * plan.producer_count();
}

// ---------------------------------------------------------------------------
// Report

const PointResult* ScalingReport::find(std::string_view label) const {
  for (const auto& p : points) {
    if (p.label == label) return &p;
  }
  return nullptr;
}

nlohmann::json ScalingReport::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& r : p.reps) {
      reps.push_back({{"rep", r.rep},
                      {"run_id", r.run_id},
                      {"run_dir", r.run_dir.string()},
                      {"ok", r.ok},
                      {"error", r.error},
                      {"orphans", r.orphans},
                      {"manifest_exact", r.manifest_exact},
                      {"rows", r.rows},
                      {"expected_rows", r.expected_rows},
                      {"locality", {{"checked", r.locality.checked}, {"violations", r.locality.violations}}},
                      {"store_keys", r.store_keys},
                      {"stats", stats_map_json(r.stats)}});
    }
    nlohmann::json derived = nlohmann::json::object();
    for (const auto& [metric, m] : p.derived) {
      for (const auto& [comp, v] : m) derived[metric][comp] = num(v);
    }
    pts.push_back({{"label", p.label},
                   {"x", p.x},
                   {"series", p.series},
                   {"plan", p.plan},
                   {"ok", p.ok},
                   {"stats", stats_map_json(p.stats)},
                   {"derived", derived},
                   {"reps", reps}});
  }
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& v : verdicts) {
    vs.push_back({{"name", v.name},
                  {"status", v.status},
                  {"measured", num(v.measured)},
                  {"threshold", num(v.threshold)},
                  {"detail", v.detail}});
  }
  return {{"id", id},         {"title", title},         {"x_label", x_label},       {"log_x", log_x},
          {"log_y", log_y},   {"components", components}, {"thresholds", thresholds}, {"points", pts},
          {"verdicts", vs}};
}

ScalingReport ScalingReport::from_json(const nlohmann::json& j) {
  ScalingReport r;
  r.id = j.at("id").get<std::string>();
  r.title = j.value("title", r.id);
  r.x_label = j.value("x_label", "x");
  r.log_x = j.value("log_x", false);
  r.log_y = j.value("log_y", false);
  r.components = j.value("components", std::vector<std::string>{});
  r.thresholds = j.value("thresholds", nlohmann::json::object());
  for (const auto& pj : j.at("points")) {
    PointResult p;
    p.label = pj.at("label").get<std::string>();
    p.x = pj.at("x").get<double>();
    p.series = pj.value("series", "");
    p.plan = pj.value("plan", nlohmann::json::object());
    p.ok = pj.value("ok", false);
    p.stats = stats_map_from_json(pj.value("stats", nlohmann::json::object()));
    for (const auto& rj : pj.value("reps", nlohmann::json::array())) {
      RepResult rr;
      rr.rep = rj.value("rep", 0u);
      rr.run_id = rj.value("run_id", "");
      rr.run_dir = rj.value("run_dir", "");
      rr.ok = rj.value("ok", false);
      rr.error = rj.value("error", "");
      rr.orphans = rj.value("orphans", std::size_t{0});
      rr.manifest_exact = rj.value("manifest_exact", false);
      rr.rows = rj.value("rows", std::uint64_t{0});
      rr.expected_rows = rj.value("expected_rows", std::uint64_t{0});
      if (rj.contains("locality")) {
        rr.locality.checked = rj["locality"].value("checked", std::int64_t{0});
        rr.locality.violations = rj["locality"].value("violations", std::int64_t{0});
      }
      rr.store_keys = rj.value("store_keys", std::vector<std::int64_t>{});
      rr.stats = stats_map_from_json(rj.value("stats", nlohmann::json::object()));
      p.reps.push_back(std::move(rr));
    }
    r.points.push_back(std::move(p));
  }
  finalize(r);
  for (const auto& vj : j.value("verdicts", nlohmann::json::array())) {
    r.verdicts.push_back(Verdict{vj.at("name").get<std::string>(), vj.at("status").get<std::string>(),
                                 num_from(vj.value("measured", nlohmann::json())),
                                 num_from(vj.value("threshold", nlohmann::json())), vj.value("detail", "")});
  }
  return r;
}

void finalize(ScalingReport& report) {
  for (auto& p : report.points) {
    std::vector<const RepResult*> good;
    for (const auto& r : p.reps) {
      if (r.ok) good.push_back(&r);
    }
    p.ok = !p.reps.empty() && good.size() == p.reps.size();
    if (good.empty()) continue;
    p.stats.clear();
    std::set<std::string> comps;
    for (auto* r : good) {
      for (const auto& [k, _] : r->stats) comps.insert(k);
    }
    for (const auto& c : comps) {
      OpStats acc;
      acc.component = c;
      std::size_t n = 0;
      for (auto* r : good) {
        auto it = r->stats.find(c);
        if (it == r->stats.end()) continue;
        const auto& s = it->second;
        acc.mean_sec += s.mean_sec;
        acc.std_sec += s.std_sec;
        acc.mean_op_sec += s.mean_op_sec;
        acc.mean_iter_sec += s.mean_iter_sec;
        acc.ranks += s.ranks;
        acc.ops += s.ops;
        acc.bytes += s.bytes;
        ++n;
      }
      const double d = static_cast<double>(n);
      acc.mean_sec /= d;
      acc.std_sec /= d;
      acc.mean_op_sec /= d;
      acc.mean_iter_sec /= d;
      acc.ranks /= n;
      acc.ops /= n;
      acc.bytes /= n;
      p.stats[c] = acc;
    }
  }
  // Derived metrics against the smallest configuration of the same series.
  for (auto& p : report.points) {
    p.derived.clear();
    const PointResult* ref = nullptr;
    for (const auto& q : report.points) {
      if (q.series == p.series && !q.stats.empty() && (!ref || q.x < ref->x)) ref = &q;
    }
    for (const auto& [c, s] : p.stats) {
      if (s.ops > 0 && s.mean_op_sec > 0 && s.bytes > 0)
        p.derived["throughput_mbs"][c] = static_cast<double>(s.bytes) / static_cast<double>(s.ops) / s.mean_op_sec / 1e6;
      if (!ref) continue;
      auto it = ref->stats.find(c);
      if (it == ref->stats.end()) continue;
      if (s.mean_op_sec > 0) p.derived["efficiency"][c] = it->second.mean_op_sec / s.mean_op_sec;
      if (s.mean_iter_sec > 0) p.derived["speedup"][c] = it->second.mean_iter_sec / s.mean_iter_sec;
    }
  }
}

// ---------------------------------------------------------------------------
// Running

namespace {

void write_model(const ModelGen& g, const fs::path& path) {
  Bytes blob;
  if (g.type == "identity") {
    blob = identity_blob();
  } else if (g.type == "affine") {
    blob = random_affine_blob(g.in, g.out, g.seed);
  } else if (g.type == "mlp") {
    std::vector<std::uint32_t> dims{g.in};
    dims.insert(dims.end(), g.hidden.begin(), g.hidden.end());
    dims.push_back(g.out);
    blob = random_mlp_blob(dims, Activation::Relu, g.seed);
  } else {
    throw PlanError("model.type: expected identity, affine or mlp");
  }
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

bool manifest_exact(const RunManifest& m) {
  const auto& p = m.plan;
  if (m.processes.size() != std::size_t{p.store_count()} + p.producer_count() + p.consumer_count()) return false;
  std::set<pid_t> pids;
  std::set<std::pair<std::string, std::int64_t>> ids;
  for (const auto& e : m.processes) {
    if (e.status != "ok" && e.status != "failed" && e.status != "killed") return false;
    if (!pids.insert(e.pid).second || !ids.insert({e.role, e.rank}).second) return false;
  }
  return m.with_role("store").size() == p.store_count() && m.with_role("producer").size() == p.producer_count() &&
         m.with_role("consumer").size() == p.consumer_count();
}

RepResult run_once(const DeploymentPlan& plan, const fs::path& dir, unsigned rep, const BenchOptions& opts) {
  RepResult r;
  r.rep = rep;
  r.run_dir = dir;
  r.expected_rows = expected_rows(plan);
  fs::remove_all(dir);
  LaunchOptions lo;
  lo.bin_dir = opts.bin_dir;
  RunManifest m;
  try {
    m = launch(plan, dir, lo);
  } catch (const std::exception& e) {
    r.error = std::string("launch: ") + e.what();
    return r;
  }
  r.run_id = m.run_id;
  std::string inspect_error;
  const auto summary = await_completion(m, default_timeout(plan), [&](const RunManifest& mm) {
    r.locality = inspect_placement(mm, &r.store_keys);
  });
  r.orphans = surviving_processes(m).size();
  r.manifest_exact = manifest_exact(m);
  r.rows = summary.merged_rows;
  if (!summary.ok) {
    r.error = summary.hook_error;
    for (const auto& p : m.processes) {
      if (p.status != "ok") {
        if (!r.error.empty()) r.error += "; ";
        r.error += p.role + " " + std::to_string(p.rank) + " " + p.status + " (exit " + std::to_string(p.exit_code) + ")";
        break;
      }
    }
    if (summary.timed_out) r.error += "; timed out";
  }
  if (!summary.timings_csv.empty()) r.stats = component_stats(read_timings_csv(summary.timings_csv));
  r.ok = summary.ok && r.orphans == 0 && r.manifest_exact && (r.expected_rows == 0 || r.rows == r.expected_rows);
  if (summary.ok && r.expected_rows != 0 && r.rows != r.expected_rows)
    r.error = "merged " + std::to_string(r.rows) + " rows, expected " + std::to_string(r.expected_rows);
  return r;
}

}  // namespace

ScalingReport run_experiment(const ExperimentSpec& spec, const fs::path& out, const BenchOptions& opts) {
  const fs::path root = fs::absolute(out) / spec.id;
  fs::create_directories(root / "runs");
  std::optional<fs::path> model;
  if (spec.model) {
    model = root / "model.mex";
    write_model(*spec.model, *model);
  }

  ScalingReport report;
  report.id = spec.id;
  report.title = spec.title;
  report.x_label = spec.x_label;
  report.log_x = spec.log_x;
  report.log_y = spec.log_y;
  report.components = spec.components;
  report.thresholds = spec.thresholds;

  for (const auto& point : spec.points) {
    SweepPoint p = point;
    if (model) p.set["workload"]["model_file"] = model->string();
    const DeploymentPlan plan = spec.plan_for(p);
    PointResult pr;
    pr.label = p.label;
    pr.x = p.x;
    pr.series = p.series;
    pr.plan = to_json(plan);
    for (unsigned rep = 0; rep < spec.repetitions; ++rep) {
      const fs::path dir = root / "runs" / (p.label + "-r" + std::to_string(rep));
      auto rr = run_once(plan, dir, rep, opts);
      if (opts.log) {
        *opts.log << spec.id << " " << p.label << " rep " << rep << ": " << (rr.ok ? "ok" : "FAILED " + rr.error);
        if (rr.stats.count("transfer")) *opts.log << ", transfer " << fmt(rr.stats["transfer"].mean_op_sec * 1e6) << " us/op";
        if (rr.stats.count("inference_total"))
          *opts.log << ", inference " << fmt(rr.stats["inference_total"].mean_op_sec * 1e6) << " us/iter";
        if (rr.stats.count("inline_eval"))
          *opts.log << ", inline " << fmt(rr.stats["inline_eval"].mean_op_sec * 1e6) << " us/iter";
        *opts.log << std::endl;
      }
      pr.reps.push_back(std::move(rr));
    }
    report.points.push_back(std::move(pr));
  }
  finalize(report);
  report.verdicts = check_properties(report, spec.thresholds);

  std::ofstream(root / "report.json") << report.to_json().dump(2) << "\n";
  plot_report(report, root);
  return report;
}

// ---------------------------------------------------------------------------
// Checks

std::vector<Verdict> check_properties(const ScalingReport& r, const nlohmann::json& t) {
  std::vector<Verdict> out;
  const std::string id = r.id;

  // Common: every run succeeded, teardown clean, accounting exact.
  {
    std::size_t failed = 0, orphans = 0, inexact = 0, runs = 0;
    for (const auto& p : r.points) {
      for (const auto& rep : p.reps) {
        ++runs;
        if (!rep.ok) ++failed;
        orphans += rep.orphans;
        if (!rep.manifest_exact || (rep.expected_rows != 0 && rep.rows != rep.expected_rows)) ++inexact;
      }
    }
    if (runs == 0) {
      out.push_back(inconclusive(id + " runs", "no runs in report"));
    } else {
      out.push_back(verdict(id + " runs succeeded", failed == 0, static_cast<double>(failed), 0,
                            std::to_string(runs - failed) + "/" + std::to_string(runs) + " runs ok"));
      out.push_back(verdict(id + " teardown", orphans == 0 && inexact == 0, static_cast<double>(orphans), 0,
                            std::to_string(orphans) + " orphan processes, " + std::to_string(inexact) +
                                " runs with inexact manifest/row accounting"));
    }
  }

  // Reproducibility envelope between repetitions of one point.
  if (t.contains("repeat_envelope")) {
    const double env = t.at("repeat_envelope").get<double>();
    const std::string comp = t.value("component", "transfer");
    double worst = 0;
    std::string where;
    bool any = false;
    for (const auto& p : r.points) {
      std::vector<double> v;
      for (const auto& rep : p.reps) {
        auto it = rep.stats.find(comp);
        if (rep.ok && it != rep.stats.end()) v.push_back(it->second.mean_op_sec);
      }
      if (v.size() < 2) continue;
      any = true;
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      const double d = (*hi - *lo) / *lo;
      if (d > worst) worst = d, where = p.label;
    }
    if (!any) {
      out.push_back(inconclusive(id + " repeat envelope", "fewer than two successful repetitions per point"));
    } else {
      Verdict v{id + " repeat envelope", worst <= env ? "PASS" : "FLAGGED", worst, env,
                "largest relative spread between repetitions of " + comp + " mean per-op time" +
                    (where.empty() ? "" : " (" + where + ")")};
      out.push_back(v);
    }
  }

  auto point = [&](const std::string& label) -> const PointResult* {
    const auto* p = r.find(label);
    return p && p->ok ? p : nullptr;
  };

  if (id == "E2") {
    const auto small = th<std::string>(t, "floor_small_label");
    const auto large = th<std::string>(t, "floor_large_label");
    const double ratio = th<double>(t, "floor_size_ratio");
    const double factor = th<double>(t, "small_floor_factor");
    const double tol = th<double>(t, "monotone_tolerance");
    const auto max_inv = th<int>(t, "monotone_inversions_max");
    for (const auto& comp : th<std::vector<std::string>>(t, "components")) {
      const auto* ps = point(small);
      const auto* pl = point(large);
      if (!ps || !pl) {
        out.push_back(inconclusive("E2 small-message floor (" + comp + ")", "missing point " + small + " or " + large));
      } else {
        const double ts = stat(*ps, comp, &OpStats::mean_op_sec), tl = stat(*pl, comp, &OpStats::mean_op_sec);
        const double m = ts / (tl / ratio);
        out.push_back(verdict("E2 small-message floor (" + comp + ")", m >= factor, m, factor,
                              "t(" + small + ")=" + fmt(ts * 1e6) + " us vs t(" + large + ")/" + fmt(ratio) + "=" +
                                  fmt(tl / ratio * 1e6) + " us"));
      }
    }
    const auto pts = by_x(r);
    bool complete = pts.size() >= 2;
    for (const auto* p : pts) {
      if (!p->ok) complete = false;
    }
    auto monotone = [&](const std::string& comp, bool gate) {
      const std::string name = "E2 payload monotonicity (" + comp + ")";
      if (!complete) {
        out.push_back(inconclusive(name, "failed or missing sweep points"));
        return;
      }
      int inversions = 0;
      double worst = 0;
      for (std::size_t i = 1; i < pts.size(); ++i) {
        const double a = stat(*pts[i - 1], comp, &OpStats::mean_op_sec), b = stat(*pts[i], comp, &OpStats::mean_op_sec);
        if (b < a) {
          ++inversions;
          worst = std::max(worst, (a - b) / a);
        }
      }
      const bool pass = inversions <= max_inv && worst <= tol;
      Verdict v = verdict(name, pass, worst, tol,
                          std::to_string(inversions) + " inversions, largest drop " + fmt(worst * 100) + "%");
      if (!gate && !pass) v.status = "FLAGGED";
      out.push_back(v);
    };
    const auto gated = th<std::string>(t, "monotone_component");
    monotone(gated, true);
    for (const auto& comp : th<std::vector<std::string>>(t, "components")) {
      if (comp != gated) monotone(comp, false);
    }
  } else if (id == "E3") {
    const double min_eff = th<double>(t, "efficiency_min");
    const auto comp = th<std::string>(t, "component");
    const auto pts = by_x(r);
    std::int64_t checked = 0, violations = 0;
    bool complete = !pts.empty();
    for (const auto* p : pts) {
      if (!p->ok) complete = false;
      for (const auto& rep : p->reps) checked += rep.locality.checked, violations += rep.locality.violations;
    }
    if (checked == 0) {
      out.push_back(inconclusive("E3 locality", "no placement checks recorded"));
    } else {
      out.push_back(verdict("E3 locality", violations <= th<std::int64_t>(t, "locality_violations_max"),
                            static_cast<double>(violations), th<double>(t, "locality_violations_max"),
                            std::to_string(checked) + " placement checks, " + std::to_string(violations) + " non-local"));
    }
    if (!complete || pts.size() < 2) {
      out.push_back(inconclusive("E3 weak-scaling efficiency", "failed or missing sweep points"));
    } else {
      double worst = 1e300;
      std::string detail;
      for (const auto* p : pts) {
        const auto it = p->derived.find("efficiency");
        const double e = it == p->derived.end() || !it->second.count(comp) ? std::nan("") : it->second.at(comp);
        detail += p->label + "=" + fmt(e) + " ";
        if (!(e >= worst)) worst = e;
      }
      out.push_back(verdict("E3 weak-scaling efficiency (" + comp + ")", worst >= min_eff, worst, min_eff, detail));
    }
  } else if (id == "E4") {
    const auto comp = th<std::string>(t, "component");
    const auto lo = th<std::string>(t, "ratio_low");
    const auto hi = th<std::string>(t, "ratio_high");
    const double ratio_min = th<double>(t, "ratio_min");
    const auto* pl = point(lo);
    const auto* ph = point(hi);
    if (!pl || !ph) {
      out.push_back(inconclusive("E4 single-shard bottleneck", "missing point " + lo + " or " + hi));
    } else {
      const double a = stat(*pl, comp, &OpStats::mean_op_sec), b = stat(*ph, comp, &OpStats::mean_op_sec);
      out.push_back(verdict("E4 single-shard bottleneck (" + comp + ")", b / a >= ratio_min, b / a, ratio_min,
                            hi + "=" + fmt(b * 1e6) + " us, " + lo + "=" + fmt(a * 1e6) + " us"));
    }
    const double spread_max = th<double>(t, "spread_max");
    std::vector<double> v;
    std::string detail;
    bool complete = true;
    for (const auto& label : th<std::vector<std::string>>(t, "spread_labels")) {
      const auto* p = point(label);
      if (!p) {
        complete = false;
        break;
      }
      v.push_back(stat(*p, comp, &OpStats::mean_op_sec));
      detail += label + "=" + fmt(v.back() * 1e6) + " us ";
    }
    if (!complete || v.size() < 2) {
      out.push_back(inconclusive("E4 shard-proportional spread", "failed or missing sweep points"));
    } else {
      const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
      const double spread = (*mx - *mn) / *mn;
      out.push_back(verdict("E4 shard-proportional spread (" + comp + ")", spread <= spread_max, spread, spread_max, detail));
    }
  } else if (id == "E5") {
    const auto comp = th<std::string>(t, "component");
    const double min_payload = th<double>(t, "min_payload_bytes");
    const auto pts = by_x(r);
    bool complete = pts.size() >= 2;
    for (const auto* p : pts) complete = complete && p->ok;
    if (!complete) {
      out.push_back(inconclusive("E5 strong scaling", "failed or missing sweep points"));
    } else {
      bool decreasing = true;
      double worst = 0;
      std::string detail;
      double min_seen = 1e300;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double v = stat(*pts[i], comp, &OpStats::mean_iter_sec);
        const double payload = pts[i]->plan.at("workload").at("payload_bytes_per_rank").get<double>();
        min_seen = std::min(min_seen, payload);
        detail += pts[i]->label + "=" + fmt(v * 1e3) + " ms ";
        if (i > 0) {
          const double prev = stat(*pts[i - 1], comp, &OpStats::mean_iter_sec);
          worst = std::max(worst, v / prev);
          if (!(v < prev)) decreasing = false;
        }
      }
      out.push_back(verdict("E5 per-rank transfer time decreases (" + comp + ")", decreasing, worst, 1.0,
                            detail + "(measured = largest t(2N)/t(N))"));
      out.push_back(verdict("E5 per-rank payload floor", min_seen >= min_payload, min_seen, min_payload,
                            "smallest per-rank payload in bytes"));
    }
  } else if (id == "E6") {
    const double tol = th<double>(t, "sum_tolerance");
    double worst = 0;
    std::size_t checked = 0;
    std::string detail;
    for (const auto& p : r.points) {
      if (p.series != "networked") continue;
      if (!p.ok) {
        checked = 0;
        break;
      }
      const double total = stat(p, "inference_total", &OpStats::mean_sec);
      const double parts = stat(p, "send", &OpStats::mean_sec) + stat(p, "model_eval", &OpStats::mean_sec) +
                           stat(p, "retrieve", &OpStats::mean_sec);
      const double d = std::fabs(total - parts) / total;
      detail += p.label + "=" + fmt(d * 100) + "% ";
      worst = std::max(worst, d);
      ++checked;
    }
    if (checked == 0) {
      out.push_back(inconclusive("E6 component sum", "no successful networked points"));
    } else {
      out.push_back(verdict("E6 component sum", worst <= tol, worst, tol, detail));
    }
    const auto* pi = point(th<std::string>(t, "inline_label"));
    const auto* pn = point(th<std::string>(t, "networked_label"));
    if (!pi || !pn) {
      out.push_back(inconclusive("E6 inline baseline", "missing inline or networked point"));
    } else {
      const double a = stat(*pi, "inline_eval", &OpStats::mean_iter_sec);
      const double b = stat(*pn, "inference_total", &OpStats::mean_iter_sec);
      out.push_back(verdict("E6 inline <= networked", a <= b, a / b, 1.0,
                            "inline " + fmt(a * 1e6) + " us/iter, networked " + fmt(b * 1e6) + " us/iter"));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plots

void plot_report(const ScalingReport& r, const fs::path& dir) {
  std::map<std::string, svg::Series> time_series, tput_series;
  for (const auto& p : r.points) {
    if (!p.ok) continue;
    for (const auto& c : r.components) {
      auto it = p.stats.find(c);
      if (it == p.stats.end()) continue;
      const std::string name = p.series.empty() ? c : p.series + " " + c;
      time_series[name].name = name;
      time_series[name].points.emplace_back(p.x, it->second.mean_op_sec);
      auto d = p.derived.find("throughput_mbs");
      if (d != p.derived.end() && d->second.count(c)) {
        tput_series[name].name = name;
        tput_series[name].points.emplace_back(p.x, d->second.at(c));
      }
    }
  }
  svg::LineChart time{r.id + ": " + r.title, r.x_label, "mean time per call [s]", r.log_x, r.log_y, {}};
  for (auto& [_, s] : time_series) time.series.push_back(s);
  svg::write(dir / "time.svg", svg::render(time));
  svg::LineChart tput{r.id + ": throughput", r.x_label, "throughput [MB/s]", r.log_x, r.log_y, {}};
  for (auto& [_, s] : tput_series) tput.series.push_back(s);
  svg::write(dir / "throughput.svg", svg::render(tput));

  bool inference = false;
  for (const auto& p : r.points) inference = inference || p.stats.count("inference_total") || p.stats.count("inline_eval");
  if (inference) {
    svg::StackedBars bars{r.id + ": inference cost per iteration", "seconds per iteration", {},
                          {"send", "model_eval", "retrieve", "inline_eval"}, {}};
    for (const auto& p : r.points) {
      if (!p.ok) continue;
      bars.categories.push_back(p.label);
      std::vector<double> row;
      for (const auto& c : bars.layers) {
        const double v = stat(p, c, &OpStats::mean_iter_sec);
        row.push_back(std::isfinite(v) ? v : 0.0);
      }
      bars.values.push_back(row);
    }
    svg::write(dir / "components.svg", svg::render(bars));
  }
}

std::size_t merge_and_plot(const fs::path& raw_dir) {
  auto rows = merge_timing_csvs(raw_dir);
  write_timings_csv(raw_dir / "merged.csv", rows, true);
  auto stats = aggregate(rows);
  svg::StackedBars bars{"mean time per call by component", "seconds", {}, {"mean per call"}, {}};
  for (const auto& [c, s] : stats) {
    bars.categories.push_back(c);
    bars.values.push_back({s.mean_op_sec});
  }
  svg::write(raw_dir / "components.svg", svg::render(bars));
  return rows.size();
}

}  // namespace isf::bench
