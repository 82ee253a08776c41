#pragma once

#include "abunet/checkpoint.hpp"
#include "abunet/data.hpp"
#include "abunet/instrumentation.hpp"
#include "abunet/network.hpp"
#include "abunet/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace abunet {

/// Everything that defines a run. Serialized as "key = value" lines.
struct TrainConfig {
  std::string arch = "smcn";
  std::string activation = "abu";
  std::string task = "cifar10"; ///< cifar10, cifar100 or synthetic
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t steps = 60000;
  std::size_t batch_size = 256;
  std::size_t checkpoint_every_epochs = 8;
  std::uint64_t val_every = 250;
  std::uint64_t record_every = 100;
  std::uint64_t seed = 1;
  Precision precision = Precision::F32;
  std::string alpha_init = "default"; ///< "default" or "pretrained:<checkpoint>"
  bool alpha_trainable = true;
  bool alpha_normalize_first = false;
  std::size_t smoothing_window = 5;
  double val_fraction = 0.05;
  std::string dims = "full"; ///< "full", "desk" or "<conv>/<dense1>/<dense2>"
  bool bn_after_activation = false;
  std::size_t train_subset = 0; ///< 0 keeps the whole training set
  std::uint64_t subset_seed = 0;
  std::size_t synthetic_size = 2048;
  int synthetic_classes = 4;
  std::string data_dir;

  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& file);
  std::string to_text() const;

  /// Sets one key from its textual value; unknown keys are rejected.
  void set(const std::string& key, const std::string& value);

  /// Throws ConfigError naming the offending combination.
  void validate() const;

  ArchDims arch_dims() const;
  std::optional<std::filesystem::path> pretrained_checkpoint() const;
  int num_classes() const;
  /// The configuration text without the seed line, for grouping repeats.
  std::string fingerprint() const;
};

struct TaskData {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Loads (or synthesizes), subsets and splits the data a config asks for.
TaskData prepare_data(const TrainConfig& config);

struct CheckpointRef {
  std::uint64_t step = 0;
  std::filesystem::path path;
};

struct RunResult {
  std::filesystem::path run_dir;
  std::vector<CheckpointRef> checkpoints;
  std::vector<ValPoint> val_curve;
  CheckpointRef selected;
  double test_accuracy = 0.0;
  double train_accuracy = 0.0; ///< evaluation mode, final weights, full training split
  RunLog log;
};

struct TrainHooks {
  /// Called after every optimizer update with the number of updates so far.
  std::function<void(std::uint64_t step, const Network& net)> after_step;
  std::function<void(const std::string& line)> progress;
};

/// Centered moving average over `window` evaluation points (truncated at
/// the ends); each checkpoint takes the smoothed value of its nearest curve
/// point. Returns the index of the best checkpoint, earliest on ties.
std::size_t post_hoc_select(std::span<const ValPoint> curve, std::span<const CheckpointRef> checkpoints,
                            std::size_t window = 5);

std::vector<double> smooth_curve(std::span<const ValPoint> curve, std::size_t window);

/// Copies the activation parameters of `source` into `net`. With
/// normalize_first every layer's blending weights are divided by their sum.
void init_alphas_from(Network& net, const Checkpoint& source, bool normalize_first);

/// Evaluation-mode accuracy over the whole dataset, in mini-batches.
double evaluate(Network& net, const Dataset& data, std::size_t batch_size, Precision precision);

/// Builds the network of a config, including pretrained initialization.
Network build_network(const TrainConfig& config);

/// The full protocol: train, checkpoint, select, test. Writes config.txt,
/// checkpoints/, logs/*.csv and result.txt into run_dir.
RunResult train(Network& net, const TaskData& data, const TrainConfig& config, const std::filesystem::path& run_dir,
                const TrainHooks& hooks = {});

RunResult run_training(const TrainConfig& config, const std::filesystem::path& run_dir, const TrainHooks& hooks = {});

/// The held-out test set of a config's task.
Dataset load_test_set(const TrainConfig& config);

struct CheckpointEval {
  double accuracy = 0.0;
  std::size_t examples = 0;
  std::string task;
};

/// Test accuracy of a checkpoint. The task settings come from the run's
/// config.txt when the checkpoint sits in a run directory; `task` and
/// `data_dir` override them when non-empty. A class-count mismatch between
/// checkpoint and task is a ConfigError.
CheckpointEval evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::string& task,
                                   const std::string& data_dir, std::size_t batch_size = 256);

/// Key-value pairs of a run directory's result.txt.
std::map<std::string, std::string> read_result(const std::filesystem::path& run_dir);

} // namespace abunet
