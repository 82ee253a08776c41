#include "abunet/analysis.hpp"

#include "abunet/error.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace abunet {

namespace fs = std::filesystem;

namespace {

std::uint64_t checkpoint_step(const fs::path& file) {
  const std::string stem = file.stem().string();
  if (!stem.starts_with("step_"))
    return 0;
  return std::stoull(stem.substr(5));
}

} // namespace

RunAnalysis analyze_run(const fs::path& run_dir) {
  RunAnalysis a;
  a.dir = run_dir;
  if (!fs::exists(run_dir / "config.txt"))
    throw IoError(run_dir.string() + " is not a run directory (no config.txt)");
  a.config = TrainConfig::load(run_dir / "config.txt");
  if (fs::exists(run_dir / "result.txt"))
    a.result = read_result(run_dir);
  a.log = import_csv(run_dir / "logs");
  for (const auto& s : a.log.preact_stats)
    if (!s.points.empty())
      a.drift.push_back(covariate_shift_metric(s));

  std::vector<fs::path> ckpts;
  if (fs::is_directory(run_dir / "checkpoints"))
    for (const auto& e : fs::directory_iterator(run_dir / "checkpoints"))
      if (e.path().extension() == ".ckpt")
        ckpts.push_back(e.path());
  if (!ckpts.empty()) {
    const auto last = *std::max_element(ckpts.begin(), ckpts.end(), [](const fs::path& x, const fs::path& y) {
      return checkpoint_step(x) < checkpoint_step(y);
    });
    const Network net = restore_network(load_checkpoint(last));
    a.final_step = checkpoint_step(last);
    for (const auto& p : net.params().all())
      if (p.activation)
        a.final_alphas[p.name] = p.tensor.item();
  }
  return a;
}

RunFinals run_finals(const RunAnalysis& run) { return {run.config.fingerprint(), run.final_alphas}; }

std::vector<double> mean_layer_drift(const std::vector<RunAnalysis>& runs) {
  std::vector<double> sum;
  std::vector<std::size_t> count;
  for (const auto& r : runs)
    for (const auto& d : r.drift) {
      const auto i = static_cast<std::size_t>(d.layer - 1);
      if (sum.size() <= i) {
        sum.resize(i + 1, 0.0);
        count.resize(i + 1, 0);
      }
      sum[i] += d.d;
      ++count[i];
    }
  for (std::size_t i = 0; i < sum.size(); ++i)
    sum[i] = count[i] ? sum[i] / static_cast<double>(count[i]) : 0.0;
  return sum;
}

std::string analysis_report(const std::vector<RunAnalysis>& runs) {
  std::ostringstream out;
  out << std::setprecision(6);
  for (const auto& r : runs) {
    out << "run " << r.dir.string() << '\n'
        << "  " << r.config.arch << " / " << r.config.activation << " / " << r.config.task << " / "
        << optimizer_name(r.config.optimizer) << " / seed " << r.config.seed << '\n';
    for (const char* key : {"status", "selected_step", "test_accuracy", "train_accuracy"})
      if (const auto it = r.result.find(key); it != r.result.end())
        out << "  " << key << ": " << it->second << '\n';
    if (!r.drift.empty()) {
      out << "  layer  drift D   mean shift  early std   late std\n";
      for (const auto& d : r.drift) {
        const auto& pts = std::find_if(r.log.preact_stats.begin(), r.log.preact_stats.end(),
                                       [&](const PreactStats& s) { return s.layer == d.layer; })
                              ->points;
        out << "  " << std::setw(5) << d.layer << "  " << std::setw(8) << d.d << "  " << std::setw(10)
            << d.mean_shift << "  " << std::setw(9) << pts.front().std << "  " << std::setw(9) << pts.back().std
            << '\n';
      }
    }
    if (!r.final_alphas.empty()) {
      out << "  activation parameters at step " << r.final_step << ":\n";
      for (const auto& [name, v] : r.final_alphas)
        out << "    " << name << " = " << v << '\n';
    }
  }

  std::map<std::string, std::vector<RunFinals>> groups;
  std::map<std::string, std::string> labels;
  for (const auto& r : runs)
    if (!r.final_alphas.empty()) {
      auto f = run_finals(r);
      labels[f.config] = r.config.arch + " / " + r.config.activation + " / " + r.config.task + " / " +
                         optimizer_name(r.config.optimizer);
      groups[f.config].push_back(std::move(f));
    }
  for (const auto& [cfg, finals] : groups) {
    if (finals.size() < 2)
      continue;
    const auto s = cross_run_summary(finals);
    out << "across " << s.runs << " runs of " << labels[cfg] << ":\n"
        << "  mean sigma (all activation parameters) = " << s.mean_sigma << '\n';
    if (std::any_of(s.params.begin(), s.params.end(), [](const ParamSpread& p) { return p.name.ends_with("/alpha"); }))
      out << "  mean sigma (scaling weights) = " << s.mean_sigma_scale << '\n';
    if (std::any_of(s.params.begin(), s.params.end(), [](const ParamSpread& p) {
          return !p.name.ends_with("/alpha") && !p.name.ends_with("/beta");
        }))
      out << "  mean sigma (blending weights) = " << s.mean_sigma_blend << '\n';
    for (const auto& p : s.params)
      out << "    " << p.name << ": mean " << p.mean << ", sigma " << p.sigma << '\n';
  }
  return out.str();
}

} // namespace abunet
