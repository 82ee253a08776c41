#include "abunet/instrumentation.hpp"

#include "abunet/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace abunet {

namespace fs = std::filesystem;

std::string role_name(AlphaRole role) {
  switch (role) {
  case AlphaRole::Scale: return "scale";
  case AlphaRole::Blend: return "blend";
  case AlphaRole::Beta: return "beta";
  }
  return "?";
}

AlphaRole parse_role(const std::string& name) {
  for (auto r : {AlphaRole::Scale, AlphaRole::Blend, AlphaRole::Beta})
    if (name == role_name(r))
      return r;
  throw IoError("unknown parameter role '" + name + "'");
}

PreactPoint summarize(std::uint64_t step, std::span<const double> values) {
  PreactPoint p{step, 0.0, 0.0};
  if (values.empty())
    return p;
  for (double v : values)
    p.mean += v;
  p.mean /= static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values)
    sq += (v - p.mean) * (v - p.mean);
  p.std = std::sqrt(sq / static_cast<double>(values.size()));
  return p;
}

AlphaTrace& RunLog::trace(int layer, AlphaRole role, int member) {
  for (auto& t : alpha_traces)
    if (t.layer == layer && t.role == role && t.member == member)
      return t;
  alpha_traces.push_back({layer, role, member, {}});
  return alpha_traces.back();
}

void RunLog::record_alphas(std::uint64_t step, const Network& net) {
  for (const auto& act : net.activations()) {
    const auto raw = act.raw_weights();
    const auto eff = act.effective_weights();
    const bool blend = act.config().family == ActivationConfig::Family::Blend;
    for (std::size_t j = 0; j < raw.size(); ++j) {
      auto& t = trace(act.layer_index(), blend ? AlphaRole::Blend : AlphaRole::Scale, blend ? static_cast<int>(j) + 1 : 0);
      t.points.push_back({step, raw[j], eff[j]});
    }
    if (const auto beta = act.beta())
      trace(act.layer_index(), AlphaRole::Beta, 0).points.push_back({step, *beta, *beta});
  }
}

void RunLog::record_preact(std::uint64_t step, int layer, std::span<const double> preactivation) {
  auto it = std::find_if(preact_stats.begin(), preact_stats.end(), [&](const PreactStats& s) { return s.layer == layer; });
  if (it == preact_stats.end()) {
    preact_stats.push_back({layer, {}});
    it = preact_stats.end() - 1;
  }
  it->points.push_back(summarize(step, preactivation));
}

void RunLog::record_val(std::uint64_t step, double accuracy) { val_curve.push_back({step, accuracy}); }

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

Drift covariate_shift_metric(const PreactStats& stats, DriftWindow early, DriftWindow late) {
  const std::size_t n = stats.points.size();
  for (const auto& w : {early, late})
    if (w.begin >= w.end || w.end > n)
      throw ConfigError("layer " + std::to_string(stats.layer) + ": drift window [" + std::to_string(w.begin) + "," +
                        std::to_string(w.end) + ") is empty or outside the " + std::to_string(n) + " recorded points");
  auto collect = [&](DriftWindow w, bool std_field) {
    std::vector<double> v;
    for (std::size_t i = w.begin; i < w.end; ++i)
      v.push_back(std_field ? stats.points[i].std : stats.points[i].mean);
    return median(v);
  };
  const double early_std = collect(early, true), late_std = collect(late, true);
  const double early_mean = collect(early, false), late_mean = collect(late, false);
  if (!(early_std > 0.0))
    throw NumericError("layer " + std::to_string(stats.layer) + ": early pre-activation std is zero");
  return {stats.layer, std::abs(late_std - early_std) / early_std, std::abs(late_mean - early_mean) / early_std};
}

Drift covariate_shift_metric(const PreactStats& stats, double fraction) {
  const std::size_t n = stats.points.size();
  if (n == 0)
    throw ConfigError("layer " + std::to_string(stats.layer) + ": no recorded pre-activation statistics");
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  return covariate_shift_metric(stats, {0, std::min(w, n)}, {n - std::min(w, n), n});
}

std::vector<double> default_shape_grid() {
  std::vector<double> g(101);
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = -5.0 + 0.1 * static_cast<double>(i);
  return g;
}

ShapeExport export_shape(const Network& net, int layer, std::span<const double> grid) {
  if (layer < 1 || static_cast<std::size_t>(layer) > net.activations().size())
    throw ConfigError("no hidden layer " + std::to_string(layer));
  const Activation& act = net.activations()[static_cast<std::size_t>(layer - 1)];
  ShapeExport out{layer, act.config().name(), std::vector<double>(grid.begin(), grid.end()), {}};
  out.y.reserve(grid.size());
  for (double x : grid)
    out.y.push_back(act.eval(x));
  return out;
}

CrossRunSummary cross_run_summary(const std::vector<RunFinals>& runs) {
  if (runs.size() < 2)
    throw ConfigError("cross-run summary needs at least two runs");
  for (const auto& r : runs) {
    if (r.config != runs.front().config)
      throw ConfigError("runs differ in configuration: '" + r.config + "' vs '" + runs.front().config + "'");
    if (r.values.size() != runs.front().values.size())
      throw ConfigError("runs record different activation parameters");
  }
  CrossRunSummary s;
  s.runs = runs.size();
  const double r = static_cast<double>(runs.size());
  std::size_t n_scale = 0, n_blend = 0;
  for (const auto& [name, first_value] : runs.front().values) {
    ParamSpread p{name, 0.0, 0.0};
    for (const auto& run : runs) {
      const auto it = run.values.find(name);
      if (it == run.values.end())
        throw ConfigError("parameter '" + name + "' missing from a run");
      p.mean += it->second / r;
    }
    for (const auto& run : runs)
      p.sigma += (run.values.at(name) - p.mean) * (run.values.at(name) - p.mean) / r;
    p.sigma = std::sqrt(p.sigma);
    s.mean_sigma += p.sigma;
    const bool beta = name.ends_with("/beta");
    const bool scale = name.ends_with("/alpha");
    if (scale) {
      s.mean_sigma_scale += p.sigma;
      ++n_scale;
    } else if (!beta) {
      s.mean_sigma_blend += p.sigma;
      ++n_blend;
    }
    s.params.push_back(p);
  }
  if (!s.params.empty())
    s.mean_sigma /= static_cast<double>(s.params.size());
  if (n_scale)
    s.mean_sigma_scale /= static_cast<double>(n_scale);
  if (n_blend)
    s.mean_sigma_blend /= static_cast<double>(n_blend);
  return s;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_csv(const fs::path& file, const char* header) {
  std::ofstream out(file, std::ios::trunc);
  if (!out)
    throw IoError("cannot write " + file.string());
  out << header << '\n';
  return out;
}

double to_double(const std::string& s, const fs::path& file) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError(file.string() + ": bad number '" + s + "'");
  return v;
}

long long to_int(const std::string& s, const fs::path& file) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError(file.string() + ": bad integer '" + s + "'");
  return v;
}

void expect_header(const std::vector<std::vector<std::string>>& rows, const fs::path& file, const std::string& header) {
  std::string got;
  if (!rows.empty())
    for (std::size_t i = 0; i < rows[0].size(); ++i)
      got += (i ? "," : "") + rows[0][i];
  if (got != header)
    throw IoError(file.string() + ": expected header '" + header + "', found '" + got + "'");
}

constexpr const char* kAlphaHeader = "step,layer,role,member,raw,effective";
constexpr const char* kPreactHeader = "step,layer,mean,std";
constexpr const char* kValHeader = "step,accuracy";
constexpr const char* kShapeHeader = "layer,x,y";

} // namespace

std::vector<std::vector<std::string>> read_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in)
    throw IoError("cannot open " + file.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      cells.push_back(cell);
    if (line.back() == ',')
      cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

void export_csv(const RunLog& log, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create " + dir.string() + ": " + ec.message());

  // Rows ordered by step, then layer, as they were recorded.
  {
    struct Row {
      std::uint64_t step;
      const AlphaTrace* trace;
      const AlphaPoint* point;
    };
    std::vector<Row> rows;
    for (const auto& t : log.alpha_traces)
      for (const auto& p : t.points)
        rows.push_back({p.step, &t, &p});
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.step < b.step; });
    auto out = open_csv(dir / "alpha_traces.csv", kAlphaHeader);
    for (const auto& r : rows)
      out << r.step << ',' << r.trace->layer << ',' << role_name(r.trace->role) << ',' << r.trace->member << ','
          << format_double(r.point->raw) << ',' << format_double(r.point->effective) << '\n';
  }
  {
    struct Row {
      std::uint64_t step;
      int layer;
      const PreactPoint* point;
    };
    std::vector<Row> rows;
    for (const auto& s : log.preact_stats)
      for (const auto& p : s.points)
        rows.push_back({p.step, s.layer, &p});
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.step < b.step; });
    auto out = open_csv(dir / "preact_stats.csv", kPreactHeader);
    for (const auto& r : rows)
      out << r.step << ',' << r.layer << ',' << format_double(r.point->mean) << ',' << format_double(r.point->std) << '\n';
  }
  {
    auto out = open_csv(dir / "val_curve.csv", kValHeader);
    for (const auto& p : log.val_curve)
      out << p.step << ',' << format_double(p.accuracy) << '\n';
  }
  {
    auto out = open_csv(dir / "shapes.csv", kShapeHeader);
    for (const auto& s : log.shapes)
      for (std::size_t i = 0; i < s.x.size(); ++i)
        out << s.layer << ',' << format_double(s.x[i]) << ',' << format_double(s.y[i]) << '\n';
  }
}

RunLog import_csv(const fs::path& dir) {
  RunLog log;
  {
    const auto file = dir / "alpha_traces.csv";
    const auto rows = read_csv(file);
    expect_header(rows, file, kAlphaHeader);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() != 6)
        throw IoError(file.string() + ": row " + std::to_string(i) + " has " + std::to_string(r.size()) + " fields");
      const int layer = static_cast<int>(to_int(r[1], file));
      const AlphaRole role = parse_role(r[2]);
      const int member = static_cast<int>(to_int(r[3], file));
      auto it = std::find_if(log.alpha_traces.begin(), log.alpha_traces.end(), [&](const AlphaTrace& t) {
        return t.layer == layer && t.role == role && t.member == member;
      });
      if (it == log.alpha_traces.end()) {
        log.alpha_traces.push_back({layer, role, member, {}});
        it = log.alpha_traces.end() - 1;
      }
      it->points.push_back({static_cast<std::uint64_t>(to_int(r[0], file)), to_double(r[4], file), to_double(r[5], file)});
    }
  }
  {
    const auto file = dir / "preact_stats.csv";
    const auto rows = read_csv(file);
    expect_header(rows, file, kPreactHeader);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() != 4)
        throw IoError(file.string() + ": row " + std::to_string(i) + " has " + std::to_string(r.size()) + " fields");
      const auto step = static_cast<std::uint64_t>(to_int(r[0], file));
      const int layer = static_cast<int>(to_int(r[1], file));
      auto it = std::find_if(log.preact_stats.begin(), log.preact_stats.end(),
                             [&](const PreactStats& s) { return s.layer == layer; });
      if (it == log.preact_stats.end()) {
        log.preact_stats.push_back({layer, {}});
        it = log.preact_stats.end() - 1;
      }
      it->points.push_back({step, to_double(r[2], file), to_double(r[3], file)});
    }
  }
  {
    const auto file = dir / "val_curve.csv";
    const auto rows = read_csv(file);
    expect_header(rows, file, kValHeader);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != 2)
        throw IoError(file.string() + ": row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) + " fields");
      log.val_curve.push_back({static_cast<std::uint64_t>(to_int(rows[i][0], file)), to_double(rows[i][1], file)});
    }
  }
  {
    const auto file = dir / "shapes.csv";
    const auto rows = read_csv(file);
    expect_header(rows, file, kShapeHeader);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() != 3)
        throw IoError(file.string() + ": row " + std::to_string(i) + " has " + std::to_string(r.size()) + " fields");
      const int layer = static_cast<int>(to_int(r[0], file));
      if (log.shapes.empty() || log.shapes.back().layer != layer)
        log.shapes.push_back({layer, {}, {}, {}});
      log.shapes.back().x.push_back(to_double(r[1], file));
      log.shapes.back().y.push_back(to_double(r[2], file));
    }
  }
  return log;
}

} // namespace abunet
