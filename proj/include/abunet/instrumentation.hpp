#pragma once

#include "abunet/network.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace abunet {

enum class AlphaRole { Scale, Blend, Beta };

std::string role_name(AlphaRole role);
AlphaRole parse_role(const std::string& name);

struct AlphaPoint {
  std::uint64_t step = 0;
  double raw = 0.0;
  double effective = 0.0;
};

/// One activation parameter over training. member is 1..5 for blending
/// weights and 0 otherwise.
struct AlphaTrace {
  int layer = 0;
  AlphaRole role = AlphaRole::Scale;
  int member = 0;
  std::vector<AlphaPoint> points;
};

struct PreactPoint {
  std::uint64_t step = 0;
  double mean = 0.0;
  double std = 0.0;
};

struct PreactStats {
  int layer = 0;
  std::vector<PreactPoint> points;
};

struct ValPoint {
  std::uint64_t step = 0;
  double accuracy = 0.0;
};

struct ShapeExport {
  int layer = 0;
  std::string label; ///< activation name, e.g. "abu_soft" or "tanh"
  std::vector<double> x;
  std::vector<double> y;
};

/// Mean and population standard deviation of a pre-activation tensor.
PreactPoint summarize(std::uint64_t step, std::span<const double> values);

/// Append-only record of one run.
class RunLog {
public:
  /// One point per activation parameter of `net`.
  void record_alphas(std::uint64_t step, const Network& net);
  void record_preact(std::uint64_t step, int layer, std::span<const double> preactivation);
  void record_val(std::uint64_t step, double accuracy);

  std::vector<AlphaTrace> alpha_traces;
  std::vector<PreactStats> preact_stats;
  std::vector<ValPoint> val_curve;
  std::vector<ShapeExport> shapes;

private:
  AlphaTrace& trace(int layer, AlphaRole role, int member);
};

struct DriftWindow {
  std::size_t begin = 0; ///< first point index
  std::size_t end = 0;   ///< one past the last point index
};

struct Drift {
  int layer = 0;
  /// |median late std - median early std| / median early std.
  double d = 0.0;
  /// |median late mean - median early mean| / median early std.
  double mean_shift = 0.0;
};

/// Explicit windows over the recorded points.
Drift covariate_shift_metric(const PreactStats& stats, DriftWindow early, DriftWindow late);

/// Default windows: first and last 10% of recorded points (at least one).
Drift covariate_shift_metric(const PreactStats& stats, double fraction = 0.1);

/// linspace(-5, 5, 101).
std::vector<double> default_shape_grid();

/// g_i(x) of hidden layer `layer` (1-based) on the grid, with the current
/// effective weights.
ShapeExport export_shape(const Network& net, int layer, std::span<const double> grid);

struct RunFinals {
  std::string config; ///< run description with the seed removed
  std::map<std::string, double> values; ///< final activation parameter values
};

struct ParamSpread {
  std::string name;
  double mean = 0.0;
  double sigma = 0.0; ///< population standard deviation
};

struct CrossRunSummary {
  std::size_t runs = 0;
  std::vector<ParamSpread> params;
  double mean_sigma = 0.0;
  /// Mean sigma restricted to scaling weights and to blending weights.
  double mean_sigma_scale = 0.0;
  double mean_sigma_blend = 0.0;
};

CrossRunSummary cross_run_summary(const std::vector<RunFinals>& runs);

/// alpha_traces.csv, preact_stats.csv, val_curve.csv, shapes.csv.
void export_csv(const RunLog& log, const std::filesystem::path& dir);
RunLog import_csv(const std::filesystem::path& dir);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Comma-separated rows; the first row is the header.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& file);

} // namespace abunet
