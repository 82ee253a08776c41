#pragma once

#include "abunet/instrumentation.hpp"
#include "abunet/training.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace abunet {

/// Everything recorded in one run directory.
struct RunAnalysis {
  std::filesystem::path dir;
  TrainConfig config;
  std::map<std::string, std::string> result; ///< empty when result.txt is absent
  RunLog log;
  std::vector<Drift> drift; ///< default windows, one entry per recorded layer
  std::uint64_t final_step = 0;
  std::map<std::string, double> final_alphas; ///< activation parameters of the last checkpoint
};

RunAnalysis analyze_run(const std::filesystem::path& run_dir);

RunFinals run_finals(const RunAnalysis& run);

/// Mean drift per hidden layer (index 0 is layer 1) over the given runs.
std::vector<double> mean_layer_drift(const std::vector<RunAnalysis>& runs);

/// Human-readable report: per run the result, the drift table and the final
/// activation parameters; per group of runs sharing a configuration the
/// cross-run spread.
std::string analysis_report(const std::vector<RunAnalysis>& runs);

} // namespace abunet
