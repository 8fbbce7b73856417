#pragma once

// Producer, consumer and inference loops plus the reconstruction metric.
//
// Step schedule (producer and infer): step s runs iteration s - warmup, so
// warmup steps carry negative iteration numbers. Each step first spends
// sleep_ms in emulated compute, then does its store traffic. With lockstep
// and a start time, step s's compute phase ends at start + (s + 1) * sleep_ms.

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "isf/client.hpp"
#include "isf/plan.hpp"
#include "isf/wire.hpp"

namespace isf {

/// Exit codes shared by the rank binaries.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitStore = 3, kExitDataMissing = 4 };

inline constexpr const char* kRunIdEnv = "ISF_RUN_ID";
inline constexpr const char* kRankEnv = "ISF_RANK";
inline constexpr const char* kNumRanksEnv = "ISF_NUM_RANKS";
inline constexpr const char* kNodeEnv = "ISF_NODE";
inline constexpr const char* kStartAtEnv = "ISF_START_AT_MS";

struct RankContext {
  std::string run_id;
  std::int64_t rank = 0;
  std::uint32_t num_ranks = 1;
  /// Wall-clock start of step 0 in ms since the epoch.
  std::optional<std::int64_t> start_at_ms;
};

/// Raised when expected data never shows up or does not match.
class DataMissingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic F32 payload for (seed, rank, step); values in [-1, 1).
Tensor producer_payload(std::uint64_t seed, std::int64_t rank, std::uint64_t step, std::uint64_t bytes);

/// Inference input batch: shape [batch_n, sample_shape...].
Tensor inference_input(std::uint64_t seed, std::int64_t rank, std::uint64_t step, std::uint32_t batch_n,
                       const std::vector<std::uint64_t>& sample_shape);

/// Drives the step clock. Records one "compute" row per step.
class StepClock {
 public:
  StepClock(const WorkloadSpec& spec, const RankContext& ctx);
  /// Blocks through step s's compute phase.
  void compute(std::uint64_t step, TimingSink& sink);

 private:
  std::chrono::milliseconds sleep_;
  std::optional<std::chrono::system_clock::time_point> start_;
};

struct ProduceResult {
  std::uint64_t sends = 0;
  std::uint64_t mismatches = 0;
};

ProduceResult produce(const WorkloadSpec& spec, Client& client, TimingSink& sink, const RankContext& ctx);

struct ConsumeResult {
  std::uint64_t epochs = 0;
  std::uint64_t gets = 0;
  std::uint64_t mismatches = 0;
};

/// Throws DataMissingError when the first snapshot never appears.
ConsumeResult consume(const WorkloadSpec& spec, Client& client, TimingSink& sink, const RankContext& ctx,
                      const std::vector<std::int64_t>& producers);

struct InferResult {
  std::uint64_t iterations = 0;
  std::uint64_t mismatches = 0;
  /// Output of the last iteration.
  std::optional<Tensor> last_output;
};

/// Networked inference: set_model once, then put / run_model / get per step.
/// Also records one "inference_total" row per step around the three calls.
InferResult infer(const WorkloadSpec& spec, Client& client, TimingSink& sink, const RankContext& ctx);

/// Same loop with run() called in-process; records "inline_eval".
InferResult infer_inline(const WorkloadSpec& spec, TimingSink& sink, const RankContext& ctx);

/// One sample: C channels x N points, row-major.
struct Field {
  std::size_t channels = 0;
  std::size_t points = 0;
  std::vector<double> values;
};

/// Mean over pairs of ||F - G||_F / ||F||_F, accumulated in f64.
/// Throws std::invalid_argument on an empty sequence, a shape mismatch or a
/// zero-norm reference field.
double relative_frobenius(std::span<const std::pair<Field, Field>> samples);

/// Reads run id, rank, rank count and start time from the environment.
/// Explicit values (when given) win.
RankContext rank_context_from_env(std::optional<std::string> run_id, std::optional<std::int64_t> rank);

}  // namespace isf
