// Acceptance gate. Runs every primary criterion and prints one PASS/FAIL line
// per criterion; exit status is non-zero if any criterion fails.
//
//   acceptance [--only codec,store,exec,frobenius,E2,E3,E4,E5,E6,teardown] [--out DIR]

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "isf/bench.hpp"
#include "isf/client.hpp"
#include "isf/exec.hpp"
#include "isf/random.hpp"
#include "isf/reproducers.hpp"
#include "isf/store.hpp"
#include "isf/wire.hpp"
#include "naive_oracle.hpp"

namespace fs = std::filesystem;
using namespace isf;
using Clock = std::chrono::steady_clock;

namespace {

// Thresholds, pinned here and cross-checked against the experiment files.
constexpr int kCodecRoundTrips = 10'000;
constexpr double kCodecBudgetSec = 10;
constexpr int kStoreConnections = 8;
constexpr int kStoreOpsPerConnection = 10'000;
constexpr double kStoreBudgetSec = 60;
constexpr int kRandomModels = 1'000;
constexpr std::uint32_t kModelMaxDim = 32;
constexpr double kExecBudgetSec = 30;
constexpr double kFrobeniusTol = 1e-12;
constexpr double kE2FloorFactor = 10;
constexpr double kE2FloorSizeRatio = 256;
constexpr double kE2MonotoneTolerance = 0.05;
constexpr int kE2MonotoneInversions = 1;
constexpr double kE3EfficiencyMin = 0.75;
constexpr std::int64_t kE3LocalityViolationsMax = 0;
constexpr double kE4RatioMin = 1.5;
constexpr double kE4SpreadMax = 0.35;
constexpr std::uint64_t kE5TotalBytes = 64ull << 20;
constexpr double kE5MinPayload = 256 * 1024;
constexpr double kE6SumTolerance = 0.05;
constexpr double kMinutes = 60;
const std::map<std::string, double> kExperimentBudgetSec{
    {"E2", 5 * kMinutes}, {"E3", 5 * kMinutes}, {"E4", 10 * kMinutes}, {"E5", 5 * kMinutes}, {"E6", 5 * kMinutes}};

struct Outcome {
  bool pass = false;
  std::string summary;
  std::vector<std::string> details;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

// ---------------------------------------------------------------------------

Bytes hex(std::initializer_list<int> v) {
  Bytes b;
  for (int x : v) b.push_back(static_cast<std::uint8_t>(x));
  return b;
}

template <class F>
bool throws_status(F&& f, Status s) {
  try {
    f();
  } catch (const Error& e) {
    return e.status() == s;
  }
  return false;
}

Outcome codec() {
  Outcome o;
  const auto t0 = Clock::now();
  int golden_fail = 0;
  auto golden = [&](bool ok, const char* what) {
    if (!ok) {
      ++golden_fail;
      o.details.push_back(std::string("golden mismatch: ") + what);
    }
  };
  const float one = 1.0f;
  const Tensor f32 = Tensor::from_f32({1}, std::span(&one, 1));
  const Bytes f32_bytes = hex({0x00, 0x01, 0x01, 0, 0, 0, 0, 0, 0, 0, 0x00, 0x00, 0x80, 0x3F});
  golden(encode_tensor(f32) == f32_bytes, "F32 [1] 1.0");
  golden(decode_tensor(f32_bytes) == f32, "decode F32 [1] 1.0");
  golden(encode_tensor(Tensor(Dtype::U8, {3}, Bytes{7, 8, 9})) ==
             hex({0x04, 0x01, 0x03, 0, 0, 0, 0, 0, 0, 0, 0x07, 0x08, 0x09}),
         "U8 [3] 7 8 9");
  golden(throws_status([] { decode_tensor(hex({0x00, 0x01, 0x01, 0, 0, 0, 0, 0, 0, 0})); }, Status::BadRequest),
         "missing data rejected");
  golden(throws_status([] { decode_tensor(hex({0x09, 0x01, 0x01, 0, 0, 0, 0, 0, 0, 0, 0})); }, Status::BadRequest),
         "dtype 0x09 rejected");
  const Frame ping{1, 0x01, 7, {}};
  golden(encode_frame(ping) == hex({0x0A, 0, 0, 0, 0x01, 0x01, 0x07, 0, 0, 0, 0, 0, 0, 0}), "PING frame");
  {
    const std::uint32_t total = 10 + (1u << 30) + 1;
    FrameDecoder dec;
    dec.feed(hex({static_cast<int>(total & 0xff), static_cast<int>((total >> 8) & 0xff),
                  static_cast<int>((total >> 16) & 0xff), static_cast<int>(total >> 24), 1, 1}));
    golden(throws_status([&] { dec.next(); }, Status::BadRequest), "1 GiB + 1 payload rejected");
  }

  std::mt19937_64 rng(20261016);
  int failures = 0;
  std::size_t split_checks = 0;
  for (int i = 0; i < kCodecRoundTrips; ++i) {
    const auto dtype = static_cast<Dtype>(rng() % 5);
    std::vector<std::uint64_t> shape(1 + rng() % kMaxRank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = n > 256 ? 1 : 1 + rng() % 4;
      n *= d;
    }
    Bytes data(n * element_size(dtype));
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    const Tensor t(dtype, shape, data);
    const Frame f{1, static_cast<std::uint8_t>(rng()), rng(), encode_put_tensor("k" + std::to_string(i), t)};
    const Bytes fb = encode_frame(f);
    bool ok = decode_tensor(encode_tensor(t)) == t && decode_frame(fb) == f;
    if (i % 100 == 0) {
      for (std::size_t cut = 0; cut <= fb.size(); ++cut, ++split_checks) {
        FrameDecoder dec;
        dec.feed(ByteView(fb).subspan(0, cut));
        auto got = dec.next();
        if (!got) {
          dec.feed(ByteView(fb).subspan(cut));
          got = dec.next();
        }
        ok = ok && got && *got == f;
      }
    }
    MetaValue m;
    switch (rng() % 3) {
      case 0: m = std::string(rng() % 40, static_cast<char>('a' + rng() % 26)); break;
      case 1: m = static_cast<std::int64_t>(rng()); break;
      default: m = std::bit_cast<double>(rng() & 0x7fefffffffffffffULL); break;
    }
    ok = ok && decode_meta(encode_meta(m)) == m;
    if (!ok) ++failures;
  }
  const double secs = seconds_since(t0);
  o.pass = golden_fail == 0 && failures == 0 && secs < kCodecBudgetSec;
  o.summary = "7 goldens (" + std::to_string(golden_fail) + " wrong), " + std::to_string(kCodecRoundTrips) +
              " tensor+frame+meta round trips (" + std::to_string(failures) + " wrong), " +
              std::to_string(split_checks) + " split-stream decodes, " + num(secs) + " s (budget " +
              num(kCodecBudgetSec) + " s)";
  return o;
}

// ---------------------------------------------------------------------------
// Per-key linearizability. Every PUT to a shared key carries (writer, version)
// and a length derived from the version. Each operation records its logical
// start and end on a global counter; afterwards a GET is a violation when it
// returns bytes no PUT wrote, a value whose PUT began after the GET ended, or
// a value that a later PUT had fully replaced before the GET began.

struct StoreServerThread {
  explicit StoreServerThread(std::uint64_t max_bytes) {
    StoreConfig cfg;
    cfg.max_bytes = max_bytes;
    cfg.workers = kStoreConnections;
    server = std::make_unique<StoreServer>(cfg, HostPort{"127.0.0.1", 0});
    thread = std::thread([this] { server->run(); });
  }
  ~StoreServerThread() {
    server->stop();
    thread.join();
  }
  Client client() {
    ClientConfig cfg;
    cfg.shards = ShardMap({server->address()});
    return Client::connect(cfg);
  }
  std::unique_ptr<StoreServer> server;
  std::thread thread;
};

struct PutRec {
  std::uint64_t start, end, version;
};
struct GetRec {
  std::uint64_t start, end;
  std::int64_t version;  // -1 absent, -2 corrupt
};

std::size_t count_violations(std::vector<PutRec> all, const std::vector<GetRec>& reads) {
  std::map<std::uint64_t, PutRec> by_version;
  for (const auto& p : all) by_version[p.version] = p;
  // Sorted by start; suffix minimum of end answers "did some PUT start after
  // x and finish before y" in O(log n).
  std::sort(all.begin(), all.end(), [](const PutRec& a, const PutRec& b) { return a.start < b.start; });
  std::vector<std::uint64_t> suffix_min_end(all.size() + 1, UINT64_MAX);
  for (std::size_t i = all.size(); i-- > 0;) suffix_min_end[i] = std::min(suffix_min_end[i + 1], all[i].end);
  auto replaced_before = [&](std::uint64_t after, std::uint64_t before) {
    auto it = std::upper_bound(all.begin(), all.end(), after, [](std::uint64_t v, const PutRec& p) { return v < p.start; });
    return suffix_min_end[static_cast<std::size_t>(it - all.begin())] < before;
  };
  std::uint64_t first_put_end = UINT64_MAX;
  for (const auto& p : all) first_put_end = std::min(first_put_end, p.end);
  std::size_t bad = 0;
  for (const auto& g : reads) {
    if (g.version == -2) {
      ++bad;
    } else if (g.version == -1) {
      bad += first_put_end < g.start;
    } else {
      auto it = by_version.find(static_cast<std::uint64_t>(g.version));
      bad += it == by_version.end() || it->second.start > g.end || replaced_before(it->second.end, g.start);
    }
  }
  return bad;
}

Tensor versioned(int writer, std::uint64_t version) {
  const std::size_t len = 16 + (version % 32) * 8;
  Bytes b(len);
  b[0] = static_cast<std::uint8_t>(writer);
  for (int i = 0; i < 8; ++i) b[1 + i] = static_cast<std::uint8_t>(version >> (8 * i));
  for (std::size_t i = 9; i < len; ++i) b[i] = static_cast<std::uint8_t>(version * 31 + i);
  return Tensor(Dtype::U8, {len}, std::move(b));
}

std::int64_t read_version(const Tensor& t) {
  const auto d = t.data();
  if (t.dtype() != Dtype::U8 || d.size() < 16) return -2;
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{d[1 + i]} << (8 * i);
  if (d.size() != 16 + (v % 32) * 8) return -2;
  for (std::size_t i = 9; i < d.size(); ++i) {
    if (d[i] != static_cast<std::uint8_t>(v * 31 + i)) return -2;
  }
  return static_cast<std::int64_t>(v);
}

Outcome store() {
  Outcome o;
  const auto t0 = Clock::now();
  constexpr int kSharedKeys = 16;
  StoreServerThread srv(64 << 20);
  std::atomic<std::uint64_t> tick{0};
  std::array<std::atomic<std::uint64_t>, kSharedKeys> next_version{};
  std::vector<std::map<int, std::vector<PutRec>>> puts(kStoreConnections);
  std::vector<std::map<int, std::vector<GetRec>>> gets(kStoreConnections);
  std::vector<std::uint64_t> private_bytes(kStoreConnections);
  std::vector<std::string> errors(kStoreConnections);

  std::vector<std::thread> threads;
  for (int w = 0; w < kStoreConnections; ++w) {
    threads.emplace_back([&, w] {
      try {
        auto c = srv.client();
        std::mt19937_64 rng(1000 + w);
        std::map<std::string, std::uint64_t> shadow;
        for (int i = 0; i < kStoreOpsPerConnection; ++i) {
          const int k = static_cast<int>(rng() % kSharedKeys);
          const std::string key = "lin." + std::to_string(k);
          const auto r = rng() % 10;
          if (r < 4) {
            const auto v = next_version[k].fetch_add(1) + 1;
            const auto t = versioned(w, v);
            const auto s = tick.fetch_add(1);
            c.put_tensor(key, t);
            puts[w][k].push_back({s, tick.fetch_add(1), v});
          } else if (r < 8) {
            const auto s = tick.fetch_add(1);
            std::int64_t got = -1;
            try {
              got = read_version(c.get_tensor(key));
            } catch (const Error& e) {
              if (e.status() != Status::NotFound) throw;
            }
            gets[w][k].push_back({s, tick.fetch_add(1), got});
          } else {
            // Private keys: put/delete against a local shadow map.
            const std::string pk = "own." + std::to_string(w) + "." + std::to_string(rng() % 8);
            if (rng() % 2) {
              const std::size_t n = 1 + rng() % 512;
              c.put_tensor(pk, Tensor(Dtype::U8, {n}, Bytes(n, static_cast<std::uint8_t>(w))));
              shadow[pk] = n;
            } else {
              const bool had = c.delete_tensor(pk);
              if (had != (shadow.erase(pk) == 1)) throw std::runtime_error("delete result disagrees with shadow map");
            }
          }
        }
        for (const auto& [_, n] : shadow) private_bytes[w] += n;
      } catch (const std::exception& e) {
        errors[w] = e.what();
      }
    });
  }
  for (auto& t : threads) t.join();

  if (count_violations({{0, 1, 1}, {2, 3, 2}}, {{4, 5, 1}}) != 1 ||
      count_violations({{0, 1, 1}, {2, 3, 2}}, {{1, 2, 2}, {1, 4, 1}, {0, 0, -1}}) != 0 ||
      count_violations({{0, 1, 1}}, {{2, 3, -1}, {2, 3, -2}, {2, 3, 9}}) != 3) {
    o.summary = "linearizability checker failed its own synthetic histories";
    return o;
  }
  std::size_t violations = 0, checked = 0;
  for (int k = 0; k < kSharedKeys; ++k) {
    std::vector<PutRec> all;
    std::vector<GetRec> reads;
    for (int w = 0; w < kStoreConnections; ++w) {
      all.insert(all.end(), puts[w][k].begin(), puts[w][k].end());
      reads.insert(reads.end(), gets[w][k].begin(), gets[w][k].end());
    }
    checked += reads.size();
    const auto v = count_violations(all, reads);
    if (v > 0) o.details.push_back(std::to_string(v) + " violations on lin." + std::to_string(k));
    violations += v;
  }

  // Shadow accounting: private shadows plus the final shared values.
  std::uint64_t expect = 0;
  auto c = srv.client();
  for (int k = 0; k < kSharedKeys; ++k) {
    try {
      expect += c.get_tensor("lin." + std::to_string(k)).byte_size();
    } catch (const Error&) {
    }
  }
  for (auto b : private_bytes) expect += b;
  std::int64_t used = -1;
  for (const auto& [k, v] : c.info(0)) {
    if (k == "bytes_used") used = std::get<std::int64_t>(v);
  }
  const bool accounting = used == static_cast<std::int64_t>(expect);
  std::string err;
  for (const auto& e : errors) {
    if (!e.empty()) err = e;
  }
  const double secs = seconds_since(t0);
  o.pass = err.empty() && violations == 0 && checked > 0 && accounting && secs < kStoreBudgetSec;
  o.summary = std::to_string(kStoreConnections) + " connections x " + std::to_string(kStoreOpsPerConnection) +
              " ops, " + std::to_string(checked) + " reads checked, " + std::to_string(violations) +
              " violations, bytes_used " + std::to_string(used) + " vs shadow " + std::to_string(expect) + ", " +
              num(secs) + " s (budget " + num(kStoreBudgetSec) + " s)";
  if (!err.empty()) o.details.push_back("client error: " + err);
  return o;
}

// ---------------------------------------------------------------------------

Outcome executor() {
  Outcome o;
  const auto t0 = Clock::now();
  StoreServerThread srv(256 << 20);
  auto c = srv.client();
  std::mt19937_64 rng(4242);
  int local_bad = 0, remote_bad = 0;
  for (int i = 0; i < kRandomModels; ++i) {
    std::vector<std::uint32_t> dims(2 + rng() % 3);
    for (auto& d : dims) d = 1 + static_cast<std::uint32_t>(rng() % kModelMaxDim);
    const Bytes blob = dims.size() == 2 ? random_affine_blob(dims[0], dims[1], rng())
                                        : random_mlp_blob(dims, rng() % 2 ? Activation::Relu : Activation::None, rng());
    const auto model = parse_model(blob);
    const std::uint64_t n = 1 + rng() % 8;
    std::vector<float> x(n * dims[0]);
    SplitMix64 g(rng());
    for (auto& v : x) v = g.uniform_pm1() * 4.0f;
    const Tensor in = Tensor::from_f32({n, dims[0]}, x);
    const Tensor out = run(model, std::vector{in}).at(0);
    if (out.to_f32() != testing_oracle::forward(blob, x, n)) {
      if (++local_bad <= 3) o.details.push_back("oracle mismatch on model " + std::to_string(i));
    }
    const std::string mk = "m." + std::to_string(i % 7);
    c.set_model(mk, blob);
    c.put_tensor("x", in);
    c.run_model(mk, {"x"}, {"y"});
    if (!(c.get_tensor("y") == out)) {
      if (++remote_bad <= 3) o.details.push_back("RUN_MODEL differs from run() on model " + std::to_string(i));
    }
  }
  const double secs = seconds_since(t0);
  o.pass = local_bad == 0 && remote_bad == 0 && secs < kExecBudgetSec;
  o.summary = std::to_string(kRandomModels) + " random affine/mlp models (dims <= " + std::to_string(kModelMaxDim) +
              "): " + std::to_string(local_bad) + " differ from the naive oracle, " + std::to_string(remote_bad) +
              " networked results differ from run(), " + num(secs) + " s (budget " + num(kExecBudgetSec) + " s)";
  return o;
}

// ---------------------------------------------------------------------------

Outcome frobenius() {
  Outcome o;
  auto F = [](std::size_t c, std::size_t n, std::vector<double> v) { return Field{c, n, std::move(v)}; };
  double worst = 0;
  const auto a = F(2, 2, {1, 2, 3, 4});
  std::vector<std::pair<Field, Field>> same{{a, a}};
  std::vector<std::pair<Field, Field>> full{{F(1, 2, {3, 4}), F(1, 2, {0, 0})}};
  std::vector<std::pair<Field, Field>> two{{F(2, 2, {1, 1, 1, 1}), F(2, 2, {1, 1, 1, 0})},
                                          {F(2, 2, {1, 1, 1, 1}), F(2, 2, {1, 1, 1, 1})}};
  for (auto [got, want] : {std::pair{relative_frobenius(same), 0.0},
                           {relative_frobenius(full), 1.0},
                           {relative_frobenius(two), 0.25}}) {
    worst = std::max(worst, std::fabs(got - want));
  }
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd;
  double worst_scale = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::pair<Field, Field>> s, scaled;
    double alpha = std::ldexp(nd(rng), static_cast<int>(rng() % 40) - 20);
    if (alpha == 0) alpha = 1;
    const std::size_t c = 1 + rng() % 4, n = 1 + rng() % 32;
    for (std::size_t t = 0; t < 1 + rng() % 4; ++t) {
      Field f{c, n, {}}, g{c, n, {}};
      for (std::size_t i = 0; i < c * n; ++i) {
        f.values.push_back(nd(rng));
        g.values.push_back(f.values.back() + 0.2 * nd(rng));
      }
      Field fa = f, ga = g;
      for (auto& v : fa.values) v *= alpha;
      for (auto& v : ga.values) v *= alpha;
      s.emplace_back(std::move(f), std::move(g));
      scaled.emplace_back(std::move(fa), std::move(ga));
    }
    const double e = relative_frobenius(s);
    worst_scale = std::max(worst_scale, std::fabs(relative_frobenius(scaled) - e) / e);
  }
  o.pass = worst <= kFrobeniusTol && worst_scale <= kFrobeniusTol;
  o.summary = "worked examples 0, 1, 0.25: max abs error " + num(worst) + "; scale invariance over 1000 random alpha: " +
              "max rel error " + num(worst_scale) + " (tolerance " + num(kFrobeniusTol) + ")";
  return o;
}

// ---------------------------------------------------------------------------
// Experiments

struct Experiments {
  fs::path out;
  fs::path bin_dir;
  std::map<std::string, bench::ScalingReport> reports;
  std::map<std::string, double> seconds;
  std::map<std::string, std::string> load_errors;

  const bench::ScalingReport* run(const std::string& id) {
    if (reports.count(id)) return &reports.at(id);
    if (load_errors.count(id)) return nullptr;
    try {
      const auto spec = bench::load_experiment(fs::path(ISF_SOURCE_DIR) / "experiments" / (id + ".json"));
      bench::BenchOptions opts;
      opts.bin_dir = bin_dir;
      opts.log = &std::cerr;
      const auto t0 = Clock::now();
      reports[id] = bench::run_experiment(spec, out, opts);
      seconds[id] = seconds_since(t0);
      return &reports.at(id);
    } catch (const std::exception& e) {
      load_errors[id] = e.what();
      return nullptr;
    }
  }
};

// The thresholds in the experiment file must equal the pinned ones.
bool thresholds_match(const nlohmann::json& t, const std::map<std::string, double>& want, Outcome& o) {
  bool ok = true;
  for (const auto& [k, v] : want) {
    if (!t.contains(k) || !t.at(k).is_number() || t.at(k).get<double>() != v) {
      ok = false;
      o.details.push_back("experiment file threshold " + k + " differs from pinned " + num(v));
    }
  }
  return ok;
}

Outcome experiment(Experiments& ex, const std::string& id, const std::map<std::string, double>& pinned,
                   const std::vector<std::string>& required) {
  Outcome o;
  const auto* r = ex.run(id);
  if (!r) {
    o.summary = "could not run: " + ex.load_errors.at(id);
    return o;
  }
  bool ok = thresholds_match(r->thresholds, pinned, o);
  std::set<std::string> seen;
  std::vector<std::string> parts;
  for (const auto& v : r->verdicts) {
    o.details.push_back(v.status + " " + v.name + ": " + v.detail);
    for (const auto& req : required) {
      if (v.name.rfind(req, 0) == 0) {
        seen.insert(req);
        if (v.status != "PASS") ok = false;
        parts.push_back(v.name + " " + v.status + " (" + num(v.measured) + " vs " + num(v.threshold) + ")");
      }
    }
  }
  for (const auto& req : required) {
    if (!seen.count(req)) {
      ok = false;
      parts.push_back(req + " missing");
    }
  }
  const double budget = kExperimentBudgetSec.at(id);
  const double secs = ex.seconds.at(id);
  if (secs >= budget) ok = false;
  o.pass = ok;
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : "; ") + p;
  o.summary = s + "; runtime " + num(secs) + " s (budget " + num(budget) + " s)";
  return o;
}

Outcome e5(Experiments& ex) {
  Outcome o = experiment(ex, "E5", {{"min_payload_bytes", kE5MinPayload}},
                         {"E5 runs succeeded", "E5 per-rank transfer", "E5 per-rank payload"});
  if (const auto* r = ex.run("E5")) {
    for (const auto& p : r->points) {
      const auto& w = p.plan.at("workload");
      std::uint64_t ranks = p.plan.at("nodes").get<std::uint64_t>() * p.plan.at("ranks_per_node").get<std::uint64_t>();
      const auto total = ranks * w.at("payload_bytes_per_rank").get<std::uint64_t>();
      if (total != kE5TotalBytes) {
        o.pass = false;
        o.details.push_back(p.label + ": total bytes " + std::to_string(total) + " != pinned " +
                            std::to_string(kE5TotalBytes));
      }
    }
  }
  return o;
}

Outcome teardown(Experiments& ex) {
  Outcome o;
  std::size_t runs = 0, orphans = 0, inexact = 0;
  for (const auto& [id, r] : ex.reports) {
    for (const auto& p : r.points) {
      for (const auto& rep : p.reps) {
        ++runs;
        orphans += rep.orphans;
        if (!rep.manifest_exact || (rep.expected_rows != 0 && rep.rows != rep.expected_rows)) {
          ++inexact;
          o.details.push_back(id + " " + p.label + " rep " + std::to_string(rep.rep) + ": rows " +
                              std::to_string(rep.rows) + "/" + std::to_string(rep.expected_rows) +
                              (rep.manifest_exact ? "" : ", manifest inexact"));
        }
      }
    }
  }
  o.pass = runs > 0 && orphans == 0 && inexact == 0;
  o.summary = std::to_string(runs) + " orchestrated runs: " + std::to_string(orphans) + " orphan processes, " +
              std::to_string(inexact) + " with inexact manifest or row accounting";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance gate"};
  std::vector<std::string> only;
  std::string out = fs::path(ISF_BINARY_DIR) / "acceptance";
  bool verbose = false;
  app.add_option("--only", only, "criteria subset")->delimiter(',');
  app.add_option("--out", out, "experiment artifacts");
  app.add_flag("-v,--verbose", verbose, "print per-verdict details");
  CLI11_PARSE(app, argc, argv);

  Experiments ex;
  ex.out = out;
  ex.bin_dir = ISF_BIN_DIR;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"codec", codec},
      {"store", store},
      {"exec", executor},
      {"frobenius", frobenius},
      {"E2",
       [&] {
         return experiment(ex, "E2",
                           {{"small_floor_factor", kE2FloorFactor},
                            {"floor_size_ratio", kE2FloorSizeRatio},
                            {"monotone_tolerance", kE2MonotoneTolerance},
                            {"monotone_inversions_max", kE2MonotoneInversions}},
                           {"E2 runs succeeded", "E2 small-message floor (send)", "E2 small-message floor (retrieve)",
                            "E2 payload monotonicity (transfer)"});
       }},
      {"E3",
       [&] {
         return experiment(ex, "E3",
                           {{"efficiency_min", kE3EfficiencyMin},
                            {"locality_violations_max", static_cast<double>(kE3LocalityViolationsMax)}},
                           {"E3 runs succeeded", "E3 locality", "E3 weak-scaling efficiency"});
       }},
      {"E4",
       [&] {
         return experiment(ex, "E4", {{"ratio_min", kE4RatioMin}, {"spread_max", kE4SpreadMax}},
                           {"E4 runs succeeded", "E4 single-shard bottleneck", "E4 shard-proportional spread"});
       }},
      {"E5", [&] { return e5(ex); }},
      {"E6",
       [&] {
         return experiment(ex, "E6", {{"sum_tolerance", kE6SumTolerance}},
                           {"E6 runs succeeded", "E6 component sum", "E6 inline <= networked"});
       }},
      {"teardown", [&] { return teardown(ex); }},
  };

  const char* names[] = {"Codec goldens and round trips", "Store linearizability and accounting",
                         "Executor oracle equivalence",   "Relative Frobenius metric",
                         "E2 small-message floor",        "E3 co-located weak scaling",
                         "E4 clustered bottleneck",       "E5 strong scaling",
                         "E6 inference decomposition",    "Orchestrator teardown"};
  int failed = 0;
  std::size_t i = 0;
  for (const auto& [key, fn] : criteria) {
    const char* name = names[i++];
    if (!only.empty() && std::find(only.begin(), only.end(), key) == only.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.summary << "\n";
    if (verbose || !o.pass) {
      for (const auto& d : o.details) std::cout << "      " << d << "\n";
    }
    std::cout << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
