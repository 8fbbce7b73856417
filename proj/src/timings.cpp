#include "isf/timings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

namespace isf {

namespace {

constexpr std::string_view kHeader = "run_id,rank,op,component,iter,bytes,micros";

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <class T>
T number(std::string_view s, const std::string& where) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw CsvSchemaError(where + ": bad number \"" + std::string(s) + "\"");
  return v;
}

}  // namespace

double CsvRow::throughput() const noexcept {
  if (micros == 0) return 0;
  return static_cast<double>(bytes) / (static_cast<double>(micros) * 1e-6);
}

std::vector<CsvRow> read_timings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CsvSchemaError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw CsvSchemaError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader && line != std::string(kHeader) + ",throughput")
    throw CsvSchemaError(path.string() + ": unexpected header \"" + line + "\"");
  const std::size_t columns = line == kHeader ? 7 : 8;

  std::vector<CsvRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto f = split(line);
    if (f.size() != columns) throw CsvSchemaError(where + ": expected " + std::to_string(columns) + " columns");
    CsvRow r;
    r.run_id = std::string(f[0]);
    r.rank = number<std::int64_t>(f[1], where);
    r.op = std::string(f[2]);
    r.component = std::string(f[3]);
    r.iter = number<std::int64_t>(f[4], where);
    r.bytes = number<std::uint64_t>(f[5], where);
    r.micros = number<std::uint64_t>(f[6], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_timings_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows, bool with_throughput) {
  std::ofstream out(path);
  if (!out) throw CsvSchemaError(path.string() + ": cannot write");
  out << kHeader << (with_throughput ? ",throughput\n" : "\n");
  char buf[64];
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.rank << ',' << r.op << ',' << r.component << ',' << r.iter << ',' << r.bytes << ','
        << r.micros;
    if (with_throughput) {
      const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, r.throughput());
      out << ',' << std::string_view(buf, p - buf);
    }
    out << '\n';
  }
  if (!out) throw CsvSchemaError(path.string() + ": write failed");
}

void sort_rows(std::vector<CsvRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const CsvRow& a, const CsvRow& b) {
    if (a.run_id != b.run_id) return a.run_id < b.run_id;
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.iter < b.iter;
  });
}

std::vector<CsvRow> merge_timing_csvs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw CsvSchemaError(dir.string() + ": not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  if (files.empty()) throw CsvSchemaError(dir.string() + ": no CSV files");
  std::sort(files.begin(), files.end());
  std::vector<CsvRow> rows;
  for (const auto& f : files) {
    auto part = read_timings_csv(f);
    rows.insert(rows.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  sort_rows(rows);
  return rows;
}

std::map<std::string, OpStats> aggregate(const std::vector<CsvRow>& rows, bool include_warmup) {
  struct Acc {
    std::map<std::pair<std::string, std::int64_t>, double> per_rank;  // (run_id, rank) -> seconds
    std::set<std::int64_t> iters;
    std::size_t ops = 0;
    double sum = 0;
    std::uint64_t bytes = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : rows) {
    if (r.warmup() && !include_warmup) continue;
    auto& a = acc[r.component];
    const double s = static_cast<double>(r.micros) * 1e-6;
    a.per_rank[{r.run_id, r.rank}] += s;
    a.iters.insert(r.iter);
    a.sum += s;
    a.bytes += r.bytes;
    ++a.ops;
  }
  std::map<std::string, OpStats> out;
  for (const auto& [name, a] : acc) {
    OpStats s;
    s.component = name;
    s.ranks = a.per_rank.size();
    s.ops = a.ops;
    s.bytes = a.bytes;
    s.mean_op_sec = a.sum / static_cast<double>(a.ops);
    double mean = 0;
    for (const auto& [_, t] : a.per_rank) mean += t;
    mean /= static_cast<double>(s.ranks);
    double var = 0;
    for (const auto& [_, t] : a.per_rank) var += (t - mean) * (t - mean);
    s.mean_sec = mean;
    s.std_sec = std::sqrt(var / static_cast<double>(s.ranks));
    s.mean_iter_sec = mean / static_cast<double>(a.iters.size());
    out.emplace(name, s);
  }
  return out;
}

}  // namespace isf
