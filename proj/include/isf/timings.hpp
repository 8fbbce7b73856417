#pragma once

// Run-level timing CSVs: reading, deterministic merging and aggregation.
// Aggregates only look at rows with iter >= 0; negative iterations are warmup.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace isf {

class CsvSchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvRow {
  std::string run_id;
  std::int64_t rank = 0;
  std::string op;
  std::string component;
  std::int64_t iter = 0;
  std::uint64_t bytes = 0;
  std::uint64_t micros = 0;

  bool warmup() const noexcept { return iter < 0; }
  /// bytes / seconds; 0 when micros is 0.
  double throughput() const noexcept;
};

std::vector<CsvRow> read_timings_csv(const std::filesystem::path& path);
void write_timings_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows,
                       bool with_throughput = false);

/// Stable sort by (run_id, rank, iter); rows of one rank keep their record order.
void sort_rows(std::vector<CsvRow>& rows);

/// Reads every *.csv under `dir` (non-recursive), merges and sorts.
/// Throws CsvSchemaError on an empty directory or any header mismatch.
std::vector<CsvRow> merge_timing_csvs(const std::filesystem::path& dir);

struct OpStats {
  std::string component;
  double mean_sec = 0;      // mean across ranks of per-rank totals
  double std_sec = 0;       // population std across ranks of per-rank totals
  std::size_t ranks = 0;
  std::size_t ops = 0;
  double mean_op_sec = 0;   // mean of individual records
  std::uint64_t bytes = 0;  // total bytes over counted rows
  /// Mean per-rank total divided by the number of counted iterations.
  double mean_iter_sec = 0;
};

/// Per-component statistics. Ranks without any row of a component do not
/// participate in that component's statistics.
std::map<std::string, OpStats> aggregate(const std::vector<CsvRow>& rows, bool include_warmup = false);

}  // namespace isf
