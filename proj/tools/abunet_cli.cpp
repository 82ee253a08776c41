#include "abunet/abunet.h"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

int exit_code(abunet_status s) {
  switch (s) {
  case ABUNET_OK: return 0;
  case ABUNET_CONFIG_ERROR:
  case ABUNET_SHAPE_ERROR: return 2;
  case ABUNET_VERIFICATION_FAILURE: return 3;
  default: return 1;
  }
}

int report(abunet_status s) {
  if (s != ABUNET_OK)
    std::cerr << "error (" << abunet_status_name(s) << "): " << abunet_last_error() << '\n';
  return exit_code(s);
}

void print_line(const char* line, void*) {
  std::cout << line << '\n';
  std::cout.flush();
}

struct ConfigHandle {
  abunet_config* cfg = nullptr;
  ~ConfigHandle() { abunet_config_destroy(cfg); }
};

struct TrainArgs {
  std::string config_file;
  std::string arch = "smcn", activation = "abu", task = "cifar10", optimizer = "adam";
  std::optional<std::string> steps, seed, batch_size, dims, precision, alpha_trainable, train_subset, subset_seed,
      val_every, record_every, smoothing_window, checkpoint_every, alpha_init, val_fraction;
  bool normalize_first = false;
  std::string data_dir, out;
  std::vector<std::string> sets;
};

int run_train(const TrainArgs& a) {
  ConfigHandle h;
  abunet_status s = a.config_file.empty() ? abunet_config_create(&h.cfg) : abunet_config_load(a.config_file.c_str(), &h.cfg);
  if (s != ABUNET_OK)
    return report(s);
  auto set = [&](const char* key, const std::string& value) {
    if (s == ABUNET_OK)
      s = abunet_config_set(h.cfg, key, value.c_str());
  };
  auto set_opt = [&](const char* key, const std::optional<std::string>& value) {
    if (value)
      set(key, *value);
  };
  set("arch", a.arch);
  set("activation", a.activation);
  set("task", a.task);
  set("optimizer", a.optimizer);
  set_opt("steps", a.steps);
  set_opt("seed", a.seed);
  set_opt("batch_size", a.batch_size);
  set_opt("dims", a.dims);
  set_opt("precision", a.precision);
  set_opt("alpha_init", a.alpha_init);
  set_opt("alpha_trainable", a.alpha_trainable);
  set_opt("train_subset", a.train_subset);
  set_opt("subset_seed", a.subset_seed);
  set_opt("val_every", a.val_every);
  set_opt("record_every", a.record_every);
  set_opt("smoothing_window", a.smoothing_window);
  set_opt("checkpoint_every_epochs", a.checkpoint_every);
  set_opt("val_fraction", a.val_fraction);
  if (a.normalize_first)
    set("alpha_normalize_first", "true");
  if (!a.data_dir.empty())
    set("data_dir", a.data_dir);
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error (configuration error): --set expects key=value, got '" << kv << "'\n";
      return 2;
    }
    set(kv.substr(0, eq).c_str(), kv.substr(eq + 1));
  }
  if (s == ABUNET_OK)
    s = abunet_config_validate(h.cfg);
  if (s != ABUNET_OK)
    return report(s);

  std::string out = a.out;
  if (out.empty()) {
    size_t needed = 0;
    abunet_config_text(h.cfg, nullptr, 0, &needed);
    std::string text(needed, '\0');
    abunet_config_text(h.cfg, text.data(), needed, &needed);
    auto value = [&](const std::string& key) {
      const auto pos = text.find(key + " = ");
      const auto begin = pos + key.size() + 3;
      return text.substr(begin, text.find('\n', begin) - begin);
    };
    out = "runs/" + value("arch") + "_" + value("activation") + "_" + value("task") + "_" + value("optimizer") +
          "_seed" + value("seed");
  }
  std::cout << "run directory: " << out << '\n';
  abunet_train_result r{};
  s = abunet_train(h.cfg, out.c_str(), print_line, nullptr, &r);
  if (s != ABUNET_OK)
    return report(s);
  std::printf("test accuracy %.4f (selected step %llu of %zu checkpoints), train accuracy %.4f\n", r.test_accuracy,
              static_cast<unsigned long long>(r.selected_step), r.checkpoints, r.train_accuracy);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive blending units: training, evaluation and analysis of small convolutional networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(abunet_version()));

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train one network and write a self-describing run directory");
  train->add_option("--config", ta.config_file, "start from a saved config.txt");
  train->add_option("--arch", ta.arch, "smcn, smcn10, smcn_s or smcn_bn")->capture_default_str();
  train->add_option("--activation", ta.activation, "fixed (relu, ...), scaled (a_relu, ...) or abu[_nrm|_abs|_pos|_soft]")
      ->capture_default_str();
  train->add_option("--task", ta.task, "cifar10, cifar100 or synthetic")->capture_default_str();
  train->add_option("--optimizer", ta.optimizer, "adam or momentum")->capture_default_str();
  train->add_option("--steps", ta.steps, "optimizer updates (default 60000; 0 writes the initial checkpoint only)");
  train->add_option("--seed", ta.seed, "run seed (default 1)");
  train->add_option("--data-dir", ta.data_dir, "CIFAR binary directory (default $ABUNET_DATA_DIR)");
  train->add_option("--out", ta.out, "run directory (default runs/<arch>_<activation>_<task>_<optimizer>_seed<seed>)");
  train->add_option("--alpha-init", ta.alpha_init, "default or pretrained:<checkpoint>");
  train->add_option("--alpha-trainable", ta.alpha_trainable, "true or false (pretrained initialization only)");
  train->add_flag("--alpha-normalize-first", ta.normalize_first,
                  "divide pretrained blending weights by their sum (abu only)");
  train->add_option("--precision", ta.precision, "f32 (default, 32-bit matrix products) or f64");
  train->add_option("--batch-size", ta.batch_size, "mini-batch size (default 256)");
  train->add_option("--dims", ta.dims, "full, desk or <conv>/<dense1>/<dense2>");
  train->add_option("--train-subset", ta.train_subset, "use this many training images (0 = all)");
  train->add_option("--subset-seed", ta.subset_seed, "seed of the training subset / synthetic data");
  train->add_option("--val-every", ta.val_every, "validation cadence in steps (default 250)");
  train->add_option("--record-every", ta.record_every, "instrumentation cadence in steps (default 100)");
  train->add_option("--smoothing-window", ta.smoothing_window, "validation points in the selection smoother (default 5)");
  train->add_option("--checkpoint-every-epochs", ta.checkpoint_every, "checkpoint cadence in epochs (default 8)");
  train->add_option("--val-fraction", ta.val_fraction, "held-out share of the training set (default 0.05)");
  train->add_option("--set", ta.sets, "any other config key, as key=value (repeatable)");

  std::string eval_ckpt, eval_task, eval_data;
  auto* eval = app.add_subcommand("eval", "test accuracy of a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--task", eval_task, "cifar10, cifar100 or synthetic (default: the run's task)");
  eval->add_option("--data-dir", eval_data, "CIFAR binary directory");

  std::vector<std::string> analyze_runs;
  auto* analyze = app.add_subcommand("analyze", "drift, activation parameters and cross-run spread of run directories");
  analyze->add_option("runs", analyze_runs, "run directories")->required();

  std::string scope = "all";
  std::uint64_t gc_seed = 1;
  std::size_t gc_cases = 100;
  bool corrupt = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic gradients with central finite differences");
  gradcheck->add_option("--scope", scope, "activations, network or all")
      ->check(CLI::IsMember({"activations", "network", "all"}))
      ->capture_default_str();
  gradcheck->add_option("--seed", gc_seed, "random seed")->capture_default_str();
  gradcheck->add_option("--cases", gc_cases, "random cases per component")->capture_default_str();
  gradcheck->add_flag("--corrupt-derivative", corrupt)->group("");

  std::string grid_file, sweep_out = "sweep", sweep_data;
  auto* sweep = app.add_subcommand("sweep", "run a grid of configurations and tabulate mean +- standard error");
  sweep->add_option("--grid-file", grid_file, "one '<arch> <activation> <task> <optimizer> seeds=...' per line")
      ->required();
  sweep->add_option("--out", sweep_out, "sweep directory")->capture_default_str();
  sweep->add_option("--data-dir", sweep_data, "CIFAR binary directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*train)
    return run_train(ta);
  if (*eval) {
    double acc = 0.0;
    std::size_t n = 0;
    const auto s = abunet_eval(eval_ckpt.c_str(), eval_task.c_str(), eval_data.c_str(), &acc, &n);
    if (s != ABUNET_OK)
      return report(s);
    std::printf("test accuracy %.4f over %zu examples\n", acc, n);
    return 0;
  }
  if (*analyze) {
    std::vector<const char*> dirs;
    for (const auto& d : analyze_runs)
      dirs.push_back(d.c_str());
    return report(abunet_analyze(dirs.data(), dirs.size(), print_line, nullptr));
  }
  if (*gradcheck) {
    const auto s = abunet_gradcheck(scope.c_str(), gc_seed, gc_cases, corrupt ? 1.1 : 1.0, print_line, nullptr);
    if (s == ABUNET_OK)
      std::cout << "all gradient checks passed\n";
    return report(s);
  }
  if (*sweep) {
    std::size_t failures = 0;
    const auto s =
        abunet_sweep(grid_file.c_str(), sweep_out.c_str(), sweep_data.c_str(), print_line, nullptr, &failures);
    return report(s);
  }
  return 2;
}
