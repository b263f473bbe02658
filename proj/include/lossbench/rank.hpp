#ifndef LOSSBENCH_RANK_HPP
#define LOSSBENCH_RANK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lossbench/metrics.hpp"

namespace lossbench {

/// One row of a per-metric rank table: a (loss, model) pair with its
/// per-dataset rank averaged over datasets.
struct RankRow {
  std::string loss;
  std::string model;
  double avg_rank = 0.0;
};

/// All (loss, model) rows of one metric.
struct MetricRankTable {
  std::string metric;
  std::vector<RankRow> rows;
};

/// Aggregated summary of a (model, loss) pair across metrics.
struct RankSummary {
  std::string model;
  std::string loss;
  double avg_rank = 0.0;  // mean of the pair's ranks over covered metrics
  int coverage = 0;       // #metrics where the pair is in the top-k
  int top1_wins = 0;      // #metrics where the pair holds rank 1
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// Loads one per-metric table from CSV (header: loss,model,avg_rank).
/// The metric name is the file stem.
inline MetricRankTable load_rank_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open rank table: " + path.string());
  MetricRankTable table;
  table.metric = path.stem().string();
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty rank table: " + path.string());
  const auto header = detail::split_csv_line(line);
  if (header.size() != 3 || header[0] != "loss" || header[1] != "model" ||
      header[2] != "avg_rank")
    throw std::runtime_error("bad rank table header: " + path.string());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 3) throw std::runtime_error("bad rank table row: " + line);
    table.rows.push_back({cells[0], cells[1], std::stod(cells[2])});
  }
  return table;
}

/// Loads every *.csv in a directory as one metric table each, sorted by metric name.
inline std::vector<MetricRankTable> load_rank_tables(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<MetricRankTable> tables;
  tables.reserve(files.size());
  for (const auto& f : files) tables.push_back(load_rank_table(f));
  return tables;
}

/// Aggregates per-metric rank tables into the summary statistics.
///
/// Within each metric the covered pairs are those whose avg_rank is among the
/// top_k smallest distinct values (so pairs tied on a covered value are all
/// covered), every pair tied at the metric minimum gets a top-1 win, and a
/// pair's summary AvgRank is the mean of its ranks over covered metrics only.
/// Output is sorted by ascending AvgRank, ties by (model, loss).
inline std::vector<RankSummary> aggregate_ranks(const std::vector<MetricRankTable>& tables,
                                                int top_k = 3) {
  if (tables.empty()) throw std::runtime_error("aggregate_ranks: no metric tables");
  if (top_k < 1) throw std::runtime_error("aggregate_ranks: top_k must be >= 1");
  struct Acc {
    double sum = 0.0;
    int coverage = 0;
    int wins = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;  // (model, loss) -> stats
  for (const auto& table : tables) {
    if (table.rows.empty()) continue;
    std::vector<double> values;
    values.reserve(table.rows.size());
    for (const auto& row : table.rows) values.push_back(row.avg_rank);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(top_k),
                                                   values.size());
    const double cutoff = values[keep - 1];
    const double best = values.front();
    for (const auto& row : table.rows) {
      if (row.avg_rank > cutoff) continue;
      Acc& a = acc[{row.model, row.loss}];
      a.sum += row.avg_rank;
      a.coverage += 1;
      if (row.avg_rank == best) a.wins += 1;
    }
  }
  std::vector<RankSummary> out;
  out.reserve(acc.size());
  for (const auto& [key, a] : acc)
    out.push_back({key.first, key.second, a.sum / a.coverage, a.coverage, a.wins});
  std::sort(out.begin(), out.end(), [](const RankSummary& x, const RankSummary& y) {
    if (x.avg_rank != y.avg_rank) return x.avg_rank < y.avg_rank;
    if (x.model != y.model) return x.model < y.model;
    return x.loss < y.loss;
  });
  return out;
}

/// One measured cell of an experiment matrix.
struct MetricRecord {
  std::string model;
  std::string loss;
  std::string dataset;  // "Cora" or "Cora ↓ Citeseer" style keys
  std::string setting;  // transductive | inductive
  std::uint64_t seed = 0;
  MetricVector metrics;
};

/// Flat collection of measured cells (the run_matrix output).
struct MetricTable {
  std::vector<MetricRecord> rows;
};

inline std::string metric_table_csv(const MetricTable& table) {
  std::string out = metric_csv_header() + "\n";
  for (const auto& r : table.rows)
    out += metric_csv_row(r.model, r.loss, r.dataset, r.setting, r.seed, r.metrics) + "\n";
  return out;
}

inline MetricTable parse_metric_table_csv(std::istream& in) {
  MetricTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty metric table");
  const auto header = detail::split_csv_line(line);
  const auto& names = metric_names();
  if (header.size() != names.size() + 6)
    throw std::runtime_error("bad metric table header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("bad metric table row: " + line);
    MetricRecord rec;
    rec.model = cells[0];
    rec.loss = cells[1];
    rec.dataset = cells[2];
    rec.setting = cells[3];
    rec.seed = std::stoull(cells[4]);
    for (std::size_t m = 0; m < names.size(); ++m)
      rec.metrics.values[names[m]] = std::stod(cells[5 + m]);
    const std::string& flags = cells.back();
    std::size_t pos = 0;
    while (pos < flags.size()) {
      std::size_t end = flags.find(';', pos);
      if (end == std::string::npos) end = flags.size();
      const std::string item = flags.substr(pos, end - pos);
      if (item.rfind("absent:", 0) == 0)
        rec.metrics.absent.insert(item.substr(7));
      else if (item.rfind("degenerate:", 0) == 0)
        rec.metrics.degenerate.insert(item.substr(11));
      pos = end + 1;
    }
    table.rows.push_back(rec);
  }
  return table;
}

/// Builds per-metric rank tables from raw measurements: seed means per
/// (model, loss, dataset), per-dataset ranking with average-tie handling and
/// the metric's better-direction, then ranks averaged over datasets.
inline std::vector<MetricRankTable> rank_tables_from_measurements(const MetricTable& table) {
  using Key = std::pair<std::string, std::string>;  // (loss, model)
  std::vector<MetricRankTable> out;
  for (const std::string& metric : metric_names()) {
    // seed-mean per (dataset, pair), skipping cells flagged absent for this metric
    std::map<std::string, std::map<Key, std::pair<double, int>>> cells;
    for (const auto& r : table.rows) {
      if (r.metrics.absent.count(metric)) continue;
      auto it = r.metrics.values.find(metric);
      if (it == r.metrics.values.end()) continue;
      auto& cell = cells[r.dataset][{r.loss, r.model}];
      cell.first += it->second;
      cell.second += 1;
    }
    std::map<Key, std::pair<double, int>> rank_acc;  // pair -> (rank sum, #datasets)
    const bool higher = metric_higher_is_better(metric);
    for (const auto& [dataset, pairs] : cells) {
      std::vector<std::pair<double, Key>> scored;
      scored.reserve(pairs.size());
      for (const auto& [key, cell] : pairs)
        scored.push_back({cell.first / cell.second, key});
      std::sort(scored.begin(), scored.end(),
                [higher](const auto& a, const auto& b) {
                  if (a.first != b.first) return higher ? a.first > b.first : a.first < b.first;
                  return a.second < b.second;
                });
      std::size_t i = 0;
      while (i < scored.size()) {
        std::size_t j = i;
        while (j + 1 < scored.size() && scored[j + 1].first == scored[i].first) ++j;
        const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) {
          auto& a = rank_acc[scored[k].second];
          a.first += shared;
          a.second += 1;
        }
        i = j + 1;
      }
    }
    if (rank_acc.empty()) continue;
    MetricRankTable mt;
    mt.metric = metric;
    for (const auto& [key, a] : rank_acc)
      mt.rows.push_back({key.first, key.second, a.first / a.second});
    out.push_back(std::move(mt));
  }
  return out;
}

/// Rounds half-to-even at two decimals for display (4.954999 -> "4.95").
inline std::string display_2dp(double v) {
  double scaled = v * 100.0;
  double r = std::nearbyint(scaled);  // default FE_TONEAREST = half-even
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << r / 100.0;
  return os.str();
}

inline std::string rank_summary_csv(const std::vector<RankSummary>& summary) {
  std::ostringstream os;
  os.precision(17);
  os << "model,loss,avg_rank,coverage,top1_wins\n";
  for (const auto& s : summary)
    os << s.model << ',' << s.loss << ',' << s.avg_rank << ',' << s.coverage << ','
       << s.top1_wins << "\n";
  return os.str();
}

inline std::string rank_summary_markdown(const std::vector<RankSummary>& summary) {
  std::string out = "| Model | Loss | AvgRank | Coverage | Top1Wins |\n";
  out += "|---|---|---|---|---|\n";
  for (const auto& s : summary)
    out += "| " + s.model + " | " + s.loss + " | " + display_2dp(s.avg_rank) + " | " +
           std::to_string(s.coverage) + " | " + std::to_string(s.top1_wins) + " |\n";
  return out;
}

/// Writes the summary plus the per-metric tables under out_dir.
inline void emit_report(const std::vector<RankSummary>& summary,
                        const std::vector<MetricRankTable>& tables,
                        const std::string& format, const std::filesystem::path& out_dir) {
  if (format != "csv" && format != "markdown")
    throw std::runtime_error("emit_report: unknown format " + format);
  std::filesystem::create_directories(out_dir);
  const std::string ext = format == "csv" ? ".csv" : ".md";
  {
    std::ofstream out(out_dir / ("summary" + ext));
    if (!out) throw std::runtime_error("emit_report: cannot write summary");
    out << (format == "csv" ? rank_summary_csv(summary) : rank_summary_markdown(summary));
  }
  for (const auto& table : tables) {
    std::ofstream out(out_dir / (table.metric + ext));
    if (!out) throw std::runtime_error("emit_report: cannot write " + table.metric);
    if (format == "csv") {
      std::ostringstream os;
      os.precision(17);
      os << "loss,model,avg_rank\n";
      for (const auto& row : table.rows)
        os << row.loss << ',' << row.model << ',' << row.avg_rank << "\n";
      out << os.str();
    } else {
      out << "| Loss | Model | Average Rank |\n|---|---|---|\n";
      for (const auto& row : table.rows)
        out << "| " << row.loss << " | " << row.model << " | " << display_2dp(row.avg_rank)
            << " |\n";
    }
  }
}

}  // namespace lossbench

#endif  // LOSSBENCH_RANK_HPP
