#include "abunet/sweep.hpp"

#include "abunet/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace abunet {

namespace fs = std::filesystem;

namespace {

std::uint64_t parse_seed(const std::string& s, int line) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size() || s.front() == '-')
    throw ConfigError("grid line " + std::to_string(line) + ": bad seed '" + s + "'");
  return v;
}

std::vector<std::uint64_t> parse_seeds(const std::string& list, int line) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(parse_seed(item, line));
      continue;
    }
    const auto lo = parse_seed(item.substr(0, dash), line), hi = parse_seed(item.substr(dash + 1), line);
    if (hi < lo)
      throw ConfigError("grid line " + std::to_string(line) + ": empty seed range '" + item + "'");
    for (auto s = lo; s <= hi; ++s)
      out.push_back(s);
  }
  if (out.empty())
    throw ConfigError("grid line " + std::to_string(line) + ": no seeds");
  return out;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s)
    out += std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' ? c : '_';
  return out;
}

std::string cell_text(const std::optional<MeanSe>& cell, std::size_t failed) {
  std::ostringstream out;
  if (cell)
    out << std::fixed << std::setprecision(2) << cell->mean << " +- " << cell->se;
  else
    out << "-";
  if (failed)
    out << " (" << failed << " failed)";
  return out.str();
}

} // namespace

std::string GridEntry::column() const {
  std::string out = arch + " " + optimizer + " " + task;
  for (const auto& [k, v] : overrides)
    out += " " + k + "=" + v;
  return out;
}

TrainConfig GridEntry::config(std::uint64_t seed) const {
  TrainConfig cfg;
  cfg.arch = arch;
  cfg.activation = activation;
  cfg.task = task;
  cfg.optimizer = parse_optimizer(optimizer);
  for (const auto& [k, v] : overrides)
    cfg.set(k, v);
  cfg.seed = seed;
  return cfg;
}

std::vector<GridEntry> parse_grid(const std::string& text) {
  std::vector<GridEntry> out;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (const auto hash = raw.find('#'); hash != std::string::npos)
      raw.erase(hash);
    std::istringstream words(raw);
    std::vector<std::string> tokens;
    for (std::string w; words >> w;)
      tokens.push_back(w);
    if (tokens.empty())
      continue;
    if (tokens.size() < 5)
      throw ConfigError("grid line " + std::to_string(lineno) +
                        ": expected '<arch> <activation> <task> <optimizer> seeds=<list> [key=value ...]'");
    GridEntry e;
    e.line = lineno;
    e.arch = tokens[0];
    e.activation = tokens[1];
    e.task = tokens[2];
    e.optimizer = tokens[3];
    for (std::size_t i = 4; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string::npos || eq == 0)
        throw ConfigError("grid line " + std::to_string(lineno) + ": expected key=value, got '" + tokens[i] + "'");
      const std::string key = tokens[i].substr(0, eq), value = tokens[i].substr(eq + 1);
      if (key == "seeds")
        e.seeds = parse_seeds(value, lineno);
      else if (key == "seed" || key == "arch" || key == "activation" || key == "task" || key == "optimizer")
        throw ConfigError("grid line " + std::to_string(lineno) + ": '" + key + "' is positional or set by seeds=");
      else
        e.overrides.emplace_back(key, value);
    }
    if (e.seeds.empty())
      throw ConfigError("grid line " + std::to_string(lineno) + ": missing seeds=");
    try {
      e.config(e.seeds.front()).validate();
    } catch (const ConfigError& err) {
      throw ConfigError("grid line " + std::to_string(lineno) + ": " + err.what());
    }
    out.push_back(std::move(e));
  }
  if (out.empty())
    throw ConfigError("grid file lists no runs");
  return out;
}

std::vector<GridEntry> load_grid(const fs::path& file) {
  std::ifstream in(file);
  if (!in)
    throw IoError("cannot open grid file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_grid(ss.str());
}

SweepTable build_table(const std::vector<SweepRun>& runs) {
  SweepTable t;
  auto index_of = [](std::vector<std::string>& v, const std::string& s) {
    const auto it = std::find(v.begin(), v.end(), s);
    if (it != v.end())
      return static_cast<std::size_t>(it - v.begin());
    v.push_back(s);
    return v.size() - 1;
  };
  for (const auto& r : runs) {
    index_of(t.rows, r.row);
    index_of(t.columns, r.column);
  }
  std::vector<std::vector<std::vector<double>>> acc(t.rows.size(), std::vector<std::vector<double>>(t.columns.size()));
  t.failed.assign(t.rows.size(), std::vector<std::size_t>(t.columns.size(), 0));
  for (const auto& r : runs) {
    const auto i = index_of(t.rows, r.row), j = index_of(t.columns, r.column);
    if (r.ok)
      acc[i][j].push_back(100.0 * r.test_accuracy);
    else
      ++t.failed[i][j];
  }
  t.cells.assign(t.rows.size(), std::vector<std::optional<MeanSe>>(t.columns.size()));
  std::vector<std::vector<double>> means(t.rows.size(), std::vector<double>(t.columns.size(), std::nan("")));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.columns.size(); ++j)
      if (!acc[i][j].empty()) {
        t.cells[i][j] = mean_se(acc[i][j]);
        means[i][j] = t.cells[i][j]->mean;
      }
  t.mean_rank = mean_ranks(means);
  return t;
}

std::string format_table(const SweepTable& t) {
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"activation"});
  for (const auto& c : t.columns)
    grid.back().push_back(c);
  grid.back().push_back("mean rank");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    grid.push_back({t.rows[i]});
    for (std::size_t j = 0; j < t.columns.size(); ++j)
      grid.back().push_back(cell_text(t.cells[i][j], t.failed[i][j]));
    std::ostringstream rank;
    if (std::isnan(t.mean_rank[i]))
      rank << "-";
    else
      rank << std::fixed << std::setprecision(2) << t.mean_rank[i];
    grid.back().push_back(rank.str());
  }
  std::vector<std::size_t> width(grid[0].size(), 0);
  for (const auto& row : grid)
    for (std::size_t j = 0; j < row.size(); ++j)
      width[j] = std::max(width[j], row[j].size());
  std::ostringstream out;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t j = 0; j < grid[r].size(); ++j) {
      if (j)
        out << " | ";
      out << std::left << std::setw(static_cast<int>(width[j])) << grid[r][j];
    }
    out << '\n';
    if (r == 0) {
      for (std::size_t j = 0; j < width.size(); ++j)
        out << (j ? "-+-" : "") << std::string(width[j], '-');
      out << '\n';
    }
  }
  out << "test accuracy in percent, mean +- standard error over seeds; rank 1 is best\n";
  return out.str();
}

void write_runs_csv(const fs::path& file, const std::vector<SweepRun>& runs) {
  std::ofstream out(file, std::ios::trunc);
  if (!out)
    throw IoError("cannot write " + file.string());
  out << "row,column,seed,status,test_accuracy,run_dir\n";
  for (const auto& r : runs)
    out << r.row << ',' << r.column << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ','
        << (r.ok ? format_double(r.test_accuracy) : std::string()) << ',' << r.run_dir.generic_string() << '\n';
  if (!out)
    throw IoError("write failed for " + file.string());
}

std::vector<SweepRun> read_runs_csv(const fs::path& file) {
  const auto rows = read_csv(file);
  if (rows.empty() || rows[0].size() != 6 || rows[0][0] != "row")
    throw IoError(file.string() + ": not a sweep runs file");
  std::vector<SweepRun> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 6)
      throw IoError(file.string() + ": row " + std::to_string(i) + " has " + std::to_string(r.size()) + " fields");
    SweepRun run;
    run.row = r[0];
    run.column = r[1];
    run.seed = std::stoull(r[2]);
    run.ok = r[3] == "ok";
    if (run.ok)
      run.test_accuracy = std::stod(r[4]);
    run.run_dir = r[5];
    out.push_back(std::move(run));
  }
  return out;
}

SweepResult run_sweep(const std::vector<GridEntry>& grid, const SweepOptions& options) {
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec)
    throw IoError("cannot create " + options.out_dir.string() + ": " + ec.message());
  auto say = [&](const std::string& s) {
    if (options.progress)
      options.progress(s);
  };
  SweepResult result;
  std::size_t total = 0;
  for (const auto& e : grid)
    total += e.seeds.size();
  std::size_t done = 0;
  for (const auto& e : grid) {
    for (const auto seed : e.seeds) {
      SweepRun run;
      run.row = e.activation;
      run.column = e.column();
      run.seed = seed;
      run.run_dir = fs::path("runs") / slug(run.column) / slug(e.activation) / ("seed_" + std::to_string(seed));
      say("[" + std::to_string(++done) + "/" + std::to_string(total) + "] " + e.activation + " | " + run.column +
          " | seed " + std::to_string(seed));
      try {
        TrainConfig cfg = e.config(seed);
        if (cfg.data_dir.empty())
          cfg.data_dir = options.data_dir;
        TrainHooks hooks;
        hooks.progress = [&](const std::string& line) { say("  " + line); };
        const auto r = run_training(cfg, options.out_dir / run.run_dir, hooks);
        run.ok = true;
        run.test_accuracy = r.test_accuracy;
      } catch (const std::exception& err) {
        ++result.failures;
        say(std::string("  failed: ") + err.what());
        const fs::path dir = options.out_dir / run.run_dir;
        fs::create_directories(dir, ec);
        if (!fs::exists(dir / "result.txt")) {
          std::ofstream out(dir / "result.txt");
          out << "status = failed\nerror = " << err.what() << '\n';
        }
      }
      result.runs.push_back(run);
      write_runs_csv(options.out_dir / "runs.csv", result.runs);
    }
  }
  result.table = build_table(result.runs);
  std::ofstream out(options.out_dir / "table.txt", std::ios::trunc);
  out << format_table(result.table);
  if (!out)
    throw IoError("cannot write " + (options.out_dir / "table.txt").string());
  return result;
}

} // namespace abunet
