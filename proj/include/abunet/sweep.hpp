#pragma once

#include "abunet/stats.hpp"
#include "abunet/training.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace abunet {

/// One grid file line:
///   <arch> <activation> <task> <optimizer> seeds=<list> [key=value ...]
/// The seed list takes comma-separated values and inclusive ranges
/// ("1-5,9"); further keys override TrainConfig fields.
struct GridEntry {
  int line = 0;
  std::string arch;
  std::string activation;
  std::string task;
  std::string optimizer;
  std::vector<std::uint64_t> seeds;
  std::vector<std::pair<std::string, std::string>> overrides;

  /// Table column: everything except the activation and the seed.
  std::string column() const;
  TrainConfig config(std::uint64_t seed) const;
};

std::vector<GridEntry> parse_grid(const std::string& text);
std::vector<GridEntry> load_grid(const std::filesystem::path& file);

struct SweepRun {
  std::string row;    ///< activation
  std::string column; ///< GridEntry::column()
  std::uint64_t seed = 0;
  bool ok = false;
  double test_accuracy = 0.0;
  std::filesystem::path run_dir; ///< relative to the sweep directory
};

struct SweepTable {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  /// Test accuracy in percent; empty where no run of the cell succeeded.
  std::vector<std::vector<std::optional<MeanSe>>> cells;
  std::vector<std::vector<std::size_t>> failed;
  std::vector<double> mean_rank;
};

/// Rows and columns keep their order of first appearance.
SweepTable build_table(const std::vector<SweepRun>& runs);
std::string format_table(const SweepTable& table);

/// runs.csv: row,column,seed,status,test_accuracy,run_dir
void write_runs_csv(const std::filesystem::path& file, const std::vector<SweepRun>& runs);
std::vector<SweepRun> read_runs_csv(const std::filesystem::path& file);

struct SweepOptions {
  std::filesystem::path out_dir;
  /// Used for every run whose grid line does not set data_dir.
  std::string data_dir;
  std::function<void(const std::string&)> progress;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  SweepTable table;
  std::size_t failures = 0;
};

/// Runs every (entry, seed) sequentially, each in its own run directory,
/// then writes runs.csv and table.txt into out_dir. A failing run is
/// recorded and the sweep continues.
SweepResult run_sweep(const std::vector<GridEntry>& grid, const SweepOptions& options);

} // namespace abunet
