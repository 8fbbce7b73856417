#include "isf/reproducers.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <thread>

#include "isf/exec.hpp"
#include "isf/random.hpp"

namespace isf {

using Clock = std::chrono::steady_clock;

namespace {

void fill_f32(Tensor& t, std::uint64_t seed) {
  SplitMix64 g(seed);
  auto out = t.mutable_data();
  const std::size_t n = out.size() / 4;
  for (std::size_t i = 0; i < n; ++i) {
    const float v = g.uniform_pm1();
    std::memcpy(out.data() + 4 * i, &v, 4);
  }
}

std::string meta_key(std::int64_t rank, std::string_view field) {
  return std::to_string(rank) + "." + std::string(field);
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read model file " + path);
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::uint64_t> sample_dims(const WorkloadSpec& spec, const ModelSpec& model) {
  if (!spec.sample_shape.empty()) return spec.sample_shape;
  if (model.exec_type != ExecType::Identity) return {model.in_dim()};
  return {spec.payload_bytes_per_rank / 4};
}

std::int64_t meta_int(const MetaValue& v, const std::string& key) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  throw DataMissingError("metadata " + key + " is not an integer");
}

}  // namespace

Tensor producer_payload(std::uint64_t seed, std::int64_t rank, std::uint64_t step, std::uint64_t bytes) {
  Tensor t = Tensor::zeros(Dtype::F32, {bytes / 4});
  fill_f32(t, mix_seed(seed, static_cast<std::uint64_t>(rank), step));
  return t;
}

Tensor inference_input(std::uint64_t seed, std::int64_t rank, std::uint64_t step, std::uint32_t batch_n,
                       const std::vector<std::uint64_t>& sample_shape) {
  std::vector<std::uint64_t> shape{batch_n};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor t = Tensor::zeros(Dtype::F32, shape);
  fill_f32(t, mix_seed(seed ^ 0x1f, static_cast<std::uint64_t>(rank), step));
  return t;
}

StepClock::StepClock(const WorkloadSpec& spec, const RankContext& ctx) : sleep_(spec.sleep_ms) {
  if (spec.lockstep && ctx.start_at_ms) {
    start_ = std::chrono::system_clock::time_point(std::chrono::milliseconds(*ctx.start_at_ms));
  }
}

void StepClock::compute(std::uint64_t step, TimingSink& sink) {
  const auto t0 = Clock::now();
  if (start_) {
    std::this_thread::sleep_until(*start_ + sleep_ * (step + 1));
  } else {
    std::this_thread::sleep_for(sleep_);
  }
  sink.record("sleep", "compute", "", 0, Clock::now() - t0);
}

ProduceResult produce(const WorkloadSpec& spec, Client& client, TimingSink& sink, const RankContext& ctx) {
  ProduceResult res;
  StepClock clock(spec, ctx);
  const auto rank = ctx.rank;
  const std::int64_t warmup = spec.warmup;
  for (std::uint64_t step = 0; step < spec.total_steps(); ++step) {
    sink.set_iteration(static_cast<std::int64_t>(step) - warmup);
    clock.compute(step, sink);
    if (step % spec.send_every != 0) continue;

    const Tensor payload = producer_payload(spec.seed, rank, step, spec.payload_bytes_per_rank);
    const auto key = producer_key(static_cast<std::uint64_t>(rank), "sol", step);
    client.put_tensor(key, payload);
    client.put_meta(meta_key(rank, "step"), static_cast<std::int64_t>(step));
    client.put_meta(meta_key(rank, "tensor_size"), static_cast<std::int64_t>(spec.payload_bytes_per_rank));
    client.put_meta("num_ranks", static_cast<std::int64_t>(ctx.num_ranks));
    ++res.sends;

    if (spec.mode == WorkloadMode::Transfer) {
      const Tensor back = client.get_tensor(key);
      if (spec.verify && !(back == payload)) ++res.mismatches;
    }
    if (spec.retain_steps > 0) {
      const std::uint64_t span = std::uint64_t{spec.retain_steps} * spec.send_every;
      if (step >= span) client.delete_tensor(producer_key(static_cast<std::uint64_t>(rank), "sol", step - span));
    }
  }
  return res;
}

ConsumeResult consume(const WorkloadSpec& spec, Client& client, TimingSink& sink, const RankContext& ctx,
                      const std::vector<std::int64_t>& producers) {
  if (producers.empty()) throw std::invalid_argument("consumer has no producers assigned");
  ConsumeResult res;
  const auto interval = std::chrono::milliseconds(spec.poll_interval_ms);
  const int tries = static_cast<int>(spec.poll_max_tries);

  auto wait_for = [&](std::int64_t p) {
    const auto first = producer_key(static_cast<std::uint64_t>(p), "sol", 0);
    if (!client.poll_key(first, interval, tries))
      throw DataMissingError("no data produced: " + first + " absent after " + std::to_string(tries) + " polls");
  };
  // The tensor lands before its step metadata; retry the metadata read.
  auto latest_step = [&](std::int64_t p) {
    const auto mkey = meta_key(p, "step");
    for (int attempt = 1;; ++attempt) {
      try {
        return meta_int(client.get_meta(mkey), mkey);
      } catch (const Error& e) {
        if (e.status() != Status::NotFound) throw;
        if (attempt >= tries)
          throw DataMissingError("no data produced: " + mkey + " absent after " + std::to_string(tries) + " reads");
        std::this_thread::sleep_for(interval);
      }
    }
  };
  sink.set_iteration(-static_cast<std::int64_t>(spec.warmup));
  wait_for(producers.front());

  const std::uint32_t producer_total = std::max<std::uint32_t>(ctx.num_ranks, 1);
  SplitMix64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(ctx.rank), 0xc0));
  std::vector<std::uint8_t> batch;
  for (std::uint64_t epoch = 0; epoch < spec.total_steps(); ++epoch) {
    sink.set_iteration(static_cast<std::int64_t>(epoch) - spec.warmup);
    std::vector<std::int64_t> pick = producers;
    if (spec.shuffle) {
      for (auto& p : pick) p = static_cast<std::int64_t>(rng.next() % producer_total);
    }
    batch.clear();
    for (const auto p : pick) {
      std::int64_t step = 0;
      std::optional<Tensor> t;
      for (int attempt = 0; attempt < 2 && !t; ++attempt) {
        step = latest_step(p);
        try {
          t = client.get_tensor(producer_key(static_cast<std::uint64_t>(p), "sol", static_cast<std::uint64_t>(step)));
        } catch (const Error& e) {
          // The producer may have retired that step between the two reads.
          if (e.status() != Status::NotFound || attempt == 1) throw;
        }
      }
      ++res.gets;
      if (spec.verify &&
          !(*t == producer_payload(spec.seed, p, static_cast<std::uint64_t>(step), spec.payload_bytes_per_rank)))
        ++res.mismatches;
      batch.insert(batch.end(), t->data().begin(), t->data().end());
    }
    const auto t0 = Clock::now();
    if (spec.train_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(spec.train_ms));
    sink.record("train", "compute", "", batch.size(), Clock::now() - t0);
    ++res.epochs;
  }
  return res;
}

InferResult infer(const WorkloadSpec& spec, Client& client, TimingSink& sink, const RankContext& ctx) {
  if (!spec.model_file) throw std::invalid_argument("inference needs workload.model_file");
  const Bytes blob = read_file(*spec.model_file);
  const ModelSpec model = parse_model(blob, "model");
  const auto dims = sample_dims(spec, model);

  sink.set_iteration(-static_cast<std::int64_t>(spec.warmup));
  client.set_model("model", blob);

  InferResult res;
  StepClock clock(spec, ctx);
  const auto rank = static_cast<std::uint64_t>(ctx.rank);
  for (std::uint64_t step = 0; step < spec.total_steps(); ++step) {
    sink.set_iteration(static_cast<std::int64_t>(step) - spec.warmup);
    clock.compute(step, sink);
    const Tensor x = inference_input(spec.seed, ctx.rank, step, spec.batch_n, dims);
    const auto in = producer_key(rank, "in", step);
    const auto out = key_on_shard(producer_key(rank, "out", step), client.shard_of(in), client.shard_count());

    const auto t0 = Clock::now();
    client.put_tensor(in, x);
    client.run_model("model", {in}, {out});
    Tensor y = client.get_tensor(out);
    sink.record("infer", "inference_total", in, x.byte_size(), Clock::now() - t0);

    if (spec.verify) {
      const Tensor expect = run(model, std::span<const Tensor>(&x, 1)).front();
      if (!(y == expect)) ++res.mismatches;
    }
    if (spec.retain_steps > 0) {
      client.delete_tensor(in);
      client.delete_tensor(out);
    }
    res.last_output = std::move(y);
    ++res.iterations;
  }
  return res;
}

InferResult infer_inline(const WorkloadSpec& spec, TimingSink& sink, const RankContext& ctx) {
  if (!spec.model_file) throw std::invalid_argument("inference needs workload.model_file");
  const ModelSpec model = parse_model(read_file(*spec.model_file), "model");
  const auto dims = sample_dims(spec, model);

  InferResult res;
  StepClock clock(spec, ctx);
  for (std::uint64_t step = 0; step < spec.total_steps(); ++step) {
    sink.set_iteration(static_cast<std::int64_t>(step) - spec.warmup);
    clock.compute(step, sink);
    const Tensor x = inference_input(spec.seed, ctx.rank, step, spec.batch_n, dims);
    const auto t0 = Clock::now();
    auto y = run(model, std::span<const Tensor>(&x, 1));
    sink.record("run", "inline_eval", "", x.byte_size(), Clock::now() - t0);
    res.last_output = std::move(y.front());
    ++res.iterations;
  }
  return res;
}

double relative_frobenius(std::span<const std::pair<Field, Field>> samples) {
  if (samples.empty()) throw std::invalid_argument("relative_frobenius needs at least one sample");
  double total = 0;
  for (std::size_t t = 0; t < samples.size(); ++t) {
    const auto& [f, g] = samples[t];
    const std::size_t n = f.channels * f.points;
    if (f.channels != g.channels || f.points != g.points || f.values.size() != n || g.values.size() != n)
      throw std::invalid_argument("sample " + std::to_string(t) + ": shape mismatch");
    double diff = 0, ref = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = f.values[i] - g.values[i];
      diff += d * d;
      ref += f.values[i] * f.values[i];
    }
    if (ref == 0) throw std::invalid_argument("sample " + std::to_string(t) + ": reference field has zero norm");
    total += std::sqrt(diff) / std::sqrt(ref);
  }
  return total / static_cast<double>(samples.size());
}

RankContext rank_context_from_env(std::optional<std::string> run_id, std::optional<std::int64_t> rank) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  auto env_int = [&](const char* name) -> std::optional<std::int64_t> {
    const auto v = env(name);
    if (!v) return std::nullopt;
    try {
      std::size_t used = 0;
      const auto x = std::stoll(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string(name) + " is not an integer: " + *v);
    }
  };
  RankContext ctx;
  ctx.run_id = run_id ? *run_id : env(kRunIdEnv).value_or("local");
  if (rank) {
    ctx.rank = *rank;
  } else if (const auto r = env_int(kRankEnv)) {
    ctx.rank = *r;
  } else {
    throw std::invalid_argument("rank not given (--rank or ISF_RANK)");
  }
  if (ctx.rank < 0) throw std::invalid_argument("rank must be non-negative");
  if (const auto n = env_int(kNumRanksEnv)) {
    if (*n < 1) throw std::invalid_argument("ISF_NUM_RANKS must be at least 1");
    ctx.num_ranks = static_cast<std::uint32_t>(*n);
  }
  ctx.start_at_ms = env_int(kStartAtEnv);
  return ctx;
}

}  // namespace isf
