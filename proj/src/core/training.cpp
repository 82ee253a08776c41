#include "abunet/training.hpp"

#include "abunet/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace abunet {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || v.front() == '-')
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1")
    return true;
  if (v == "false" || v == "0")
    return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kDropoutStream = 3;

} // namespace

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "arch")
    arch = v;
  else if (key == "activation")
    activation = v;
  else if (key == "task")
    task = v;
  else if (key == "optimizer")
    optimizer = parse_optimizer(v);
  else if (key == "steps")
    steps = parse_uint(key, v);
  else if (key == "batch_size")
    batch_size = parse_uint(key, v);
  else if (key == "checkpoint_every_epochs")
    checkpoint_every_epochs = parse_uint(key, v);
  else if (key == "val_every")
    val_every = parse_uint(key, v);
  else if (key == "record_every")
    record_every = parse_uint(key, v);
  else if (key == "seed")
    seed = parse_uint(key, v);
  else if (key == "precision") {
    if (v == "f64")
      precision = Precision::F64;
    else if (v == "f32")
      precision = Precision::F32;
    else
      throw ConfigError("precision: expected f64 or f32, got '" + v + "'");
  } else if (key == "alpha_init")
    alpha_init = v;
  else if (key == "alpha_trainable")
    alpha_trainable = parse_bool(key, v);
  else if (key == "alpha_normalize_first")
    alpha_normalize_first = parse_bool(key, v);
  else if (key == "smoothing_window")
    smoothing_window = parse_uint(key, v);
  else if (key == "val_fraction")
    val_fraction = parse_real(key, v);
  else if (key == "dims")
    dims = v;
  else if (key == "bn_after_activation")
    bn_after_activation = parse_bool(key, v);
  else if (key == "train_subset")
    train_subset = parse_uint(key, v);
  else if (key == "subset_seed")
    subset_seed = parse_uint(key, v);
  else if (key == "synthetic_size")
    synthetic_size = parse_uint(key, v);
  else if (key == "synthetic_classes")
    synthetic_classes = static_cast<int>(parse_uint(key, v));
  else if (key == "data_dir")
    data_dir = v;
  else
    throw ConfigError("unknown configuration key '" + key + "'");
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#')
      continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
  return cfg;
}

TrainConfig TrainConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in)
    throw IoError("cannot open config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "arch = " << arch << '\n'
      << "activation = " << activation << '\n'
      << "task = " << task << '\n'
      << "optimizer = " << optimizer_name(optimizer) << '\n'
      << "steps = " << steps << '\n'
      << "batch_size = " << batch_size << '\n'
      << "checkpoint_every_epochs = " << checkpoint_every_epochs << '\n'
      << "val_every = " << val_every << '\n'
      << "record_every = " << record_every << '\n'
      << "seed = " << seed << '\n'
      << "precision = " << (precision == Precision::F64 ? "f64" : "f32") << '\n'
      << "alpha_init = " << alpha_init << '\n'
      << "alpha_trainable = " << bool_text(alpha_trainable) << '\n'
      << "alpha_normalize_first = " << bool_text(alpha_normalize_first) << '\n'
      << "smoothing_window = " << smoothing_window << '\n'
      << "val_fraction = " << val_fraction << '\n'
      << "dims = " << dims << '\n'
      << "bn_after_activation = " << bool_text(bn_after_activation) << '\n'
      << "train_subset = " << train_subset << '\n'
      << "subset_seed = " << subset_seed << '\n'
      << "synthetic_size = " << synthetic_size << '\n'
      << "synthetic_classes = " << synthetic_classes << '\n'
      << "data_dir = " << data_dir << '\n';
  return out.str();
}

std::string TrainConfig::fingerprint() const {
  std::istringstream in(to_text());
  std::string line, out;
  while (std::getline(in, line))
    if (!line.starts_with("seed ") && !line.starts_with("data_dir "))
      out += line + "; ";
  return out;
}

ArchDims TrainConfig::arch_dims() const {
  ArchDims d;
  if (dims == "full") {
    d = ArchDims::full();
  } else if (dims == "desk") {
    d = ArchDims::desk();
  } else {
    std::istringstream in(dims);
    std::string a, b, c;
    if (!std::getline(in, a, '/') || !std::getline(in, b, '/') || !std::getline(in, c) )
      throw ConfigError("dims: expected full, desk or <conv>/<dense1>/<dense2>, got '" + dims + "'");
    d.conv_channels = parse_uint("dims", a);
    d.dense1 = parse_uint("dims", b);
    d.dense2 = parse_uint("dims", c);
    if (!d.conv_channels || !d.dense1 || !d.dense2)
      throw ConfigError("dims: widths must be positive");
  }
  d.bn_after_activation = bn_after_activation;
  return d;
}

std::optional<fs::path> TrainConfig::pretrained_checkpoint() const {
  if (alpha_init.starts_with("pretrained:"))
    return fs::path(alpha_init.substr(std::string("pretrained:").size()));
  return std::nullopt;
}

int TrainConfig::num_classes() const {
  if (task == "synthetic")
    return synthetic_classes;
  return cifar_classes(parse_task(task));
}

void TrainConfig::validate() const {
  const Variant variant = parse_variant(arch);
  const ActivationConfig act = ActivationConfig::parse(activation);
  if (task != "synthetic")
    parse_task(task);
  else if (synthetic_classes < 2 || synthetic_size < 2 * static_cast<std::size_t>(synthetic_classes))
    throw ConfigError("synthetic task needs at least 2 classes and 2 examples per class");
  arch_dims();
  if (batch_size == 0)
    throw ConfigError("batch_size must be positive");
  if (checkpoint_every_epochs == 0 || val_every == 0 || record_every == 0)
    throw ConfigError("checkpoint, validation and recording cadences must be positive");
  if (smoothing_window == 0)
    throw ConfigError("smoothing_window must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie in (0, 1)");
  if (alpha_init != "default" && !pretrained_checkpoint())
    throw ConfigError("alpha_init: expected 'default' or 'pretrained:<checkpoint>', got '" + alpha_init + "'");
  const auto pre = pretrained_checkpoint();
  if (pre && pre->empty())
    throw ConfigError("alpha_init: pretrained needs a checkpoint path");
  if (pre && !act.adaptive())
    throw ConfigError("pretrained alpha initialization needs an adaptive activation (a_* or abu*); '" + activation +
                      "' has no activation parameters, so this would be the plain fixed-activation cell");
  if (!alpha_trainable && !pre)
    throw ConfigError("alpha_trainable=false only applies to a pretrained alpha initialization; with default "
                      "initialization the activation would stay at its starting shape");
  if (alpha_normalize_first && !(pre && act.family == ActivationConfig::Family::Blend && act.norm == NormMode::None))
    throw ConfigError("alpha_normalize_first applies to a pretrained, unconstrained ABU ('abu') only; the "
                      "normalized variants already constrain their weights");
  if (bn_after_activation && variant != Variant::SMCN_BN)
    throw ConfigError("bn_after_activation only applies to smcn_bn");
}

namespace {

std::filesystem::path cifar_dir(const TrainConfig& config) {
  const auto dir = resolve_data_dir(config.data_dir);
  if (!dir)
    throw ConfigError("task " + config.task + " needs the CIFAR binaries: pass --data-dir or set ABUNET_DATA_DIR");
  return *dir;
}

} // namespace

Dataset load_test_set(const TrainConfig& config) {
  if (config.task == "synthetic")
    return make_synthetic(std::max<std::size_t>(config.synthetic_size / 4, config.synthetic_classes),
                          config.synthetic_classes, 2000 + config.subset_seed);
  return load_cifar(cifar_dir(config), parse_task(config.task), CifarSplit::Test);
}

TaskData prepare_data(const TrainConfig& config) {
  Dataset train_full;
  if (config.task == "synthetic")
    train_full = make_synthetic(config.synthetic_size, config.synthetic_classes, 1000 + config.subset_seed);
  else
    train_full = load_cifar(cifar_dir(config), parse_task(config.task), CifarSplit::Train);
  Dataset test = load_test_set(config);
  if (config.train_subset > 0)
    train_full = take_subset(train_full, config.train_subset, config.subset_seed);
  auto s = split(train_full, config.val_fraction, config.seed);
  return {std::move(s.train), std::move(s.val), std::move(test)};
}

std::vector<double> smooth_curve(std::span<const ValPoint> curve, std::size_t window) {
  if (window == 0)
    throw ConfigError("smoothing window must be positive");
  const std::size_t n = curve.size();
  const std::size_t half = window / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + (window - 1 - half));
    double acc = 0.0;
    for (std::size_t k = lo; k <= hi; ++k)
      acc += curve[k].accuracy;
    out[i] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::size_t post_hoc_select(std::span<const ValPoint> curve, std::span<const CheckpointRef> checkpoints,
                            std::size_t window) {
  if (checkpoints.empty())
    throw ConfigError("post-hoc selection needs at least one checkpoint");
  if (curve.empty())
    throw ConfigError("post-hoc selection needs a validation curve");
  const auto smoothed = smooth_curve(curve, window);
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    const auto step = checkpoints[c].step;
    std::size_t nearest = 0;
    std::uint64_t nearest_gap = std::numeric_limits<std::uint64_t>::max();
    for (std::size_t i = 0; i < curve.size(); ++i) {
      const std::uint64_t gap = curve[i].step > step ? curve[i].step - step : step - curve[i].step;
      if (gap < nearest_gap) {
        nearest_gap = gap;
        nearest = i;
      }
    }
    if (smoothed[nearest] > best_value) {
      best_value = smoothed[nearest];
      best = c;
    }
  }
  return best;
}

void init_alphas_from(Network& net, const Checkpoint& source, bool normalize_first) {
  if (source.activation != net.activation_config().name())
    throw ConfigError("pretrained checkpoint uses activation '" + source.activation + "', this run uses '" +
                      net.activation_config().name() + "'");
  if (source.variant != variant_name(net.variant()))
    throw ConfigError("pretrained checkpoint is a '" + source.variant + "' network, this run builds '" +
                      std::string(variant_name(net.variant())) + "'");
  for (auto& p : net.params().all()) {
    if (!p.activation)
      continue;
    const StoredArray* s = source.find(p.name);
    if (!s || s->values.size() != p.tensor.size())
      throw ConfigError("pretrained checkpoint lacks activation parameter '" + p.name + "'");
    std::copy(s->values.begin(), s->values.end(), p.tensor.values().begin());
  }
  if (!normalize_first)
    return;
  const auto& cfg = net.activation_config();
  if (cfg.family != ActivationConfig::Family::Blend || cfg.norm != NormMode::None)
    throw ConfigError("normalize-first applies to the unconstrained ABU only");
  for (const auto& act : net.activations()) {
    double total = 0.0;
    for (const auto& a : act.alpha_tensors())
      total += a.item();
    if (std::abs(total) < kNormalizationThreshold)
      throw DegenerateNormalization(act.context() + ": pretrained blending weights sum to " + format_double(total) +
                                    ", cannot normalize");
    for (auto a : act.alpha_tensors())
      a.values()[0] /= total;
  }
}

double evaluate(Network& net, const Dataset& data, std::size_t batch_size, Precision precision) {
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = assemble_batch(data, idx);
    Tape tape(false, precision);
    const Tensor logits = net.forward(tape, b.x);
    correct += static_cast<std::size_t>(std::llround(ops::accuracy(logits, b.y) * static_cast<double>(n)));
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Network build_network(const TrainConfig& config) {
  config.validate();
  Network net = Network::build_smcn(parse_variant(config.arch), ActivationConfig::parse(config.activation),
                                    config.num_classes(), stream_seed(config.seed, kInitStream), config.arch_dims());
  if (const auto pre = config.pretrained_checkpoint())
    init_alphas_from(net, load_checkpoint(*pre), config.alpha_normalize_first);
  return net;
}

namespace {

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::trunc);
  if (!out)
    throw IoError("cannot write " + file.string());
  out << text;
  if (!out)
    throw IoError("write failed for " + file.string());
}

std::string checkpoint_name(std::uint64_t step) {
  std::ostringstream s;
  s << "step_" << std::setw(6) << std::setfill('0') << step << ".ckpt";
  return s.str();
}

} // namespace

RunResult train(Network& net, const TaskData& data, const TrainConfig& config, const fs::path& run_dir,
                const TrainHooks& hooks) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  std::error_code ec;
  fs::create_directories(run_dir / "checkpoints", ec);
  fs::create_directories(run_dir / "logs", ec);
  if (ec)
    throw IoError("cannot create run directory " + run_dir.string() + ": " + ec.message());
  write_text(run_dir / "config.txt", config.to_text());

  RunResult result;
  result.run_dir = run_dir;
  RunLog& log = result.log;
  auto say = [&](const std::string& line) {
    if (hooks.progress)
      hooks.progress(line);
  };

  BatchIterator batches(data.train, config.batch_size, stream_seed(config.seed, kBatchStream));
  Rng dropout_rng(stream_seed(config.seed, kDropoutStream));
  Optimizer optimizer(OptimizerConfig{config.optimizer}, config.steps);
  const bool freeze_alphas = config.pretrained_checkpoint() && !config.alpha_trainable;
  std::vector<Parameter*> trainable;
  for (auto& p : net.params().all())
    if (!(p.activation && freeze_alphas))
      trainable.push_back(&p);

  const std::uint64_t checkpoint_every =
      std::max<std::uint64_t>(1, config.checkpoint_every_epochs * batches.batches_per_epoch());
  auto save = [&](std::uint64_t step) {
    const fs::path file = run_dir / "checkpoints" / checkpoint_name(step);
    save_checkpoint(file, snapshot(net, step, rng_state(dropout_rng), optimizer.snapshot()));
    result.checkpoints.push_back({step, file});
  };
  auto validate_now = [&](std::uint64_t step) {
    const double acc = evaluate(net, data.val, config.batch_size, config.precision);
    log.record_val(step, acc);
    return acc;
  };
  auto fail = [&](const std::string& what) {
    std::ostringstream out;
    out << "status = failed\nerror = " << what << '\n'
        << "last_checkpoint = "
        << (result.checkpoints.empty() ? std::string() : result.checkpoints.back().path.filename().string()) << '\n';
    write_text(run_dir / "result.txt", out.str());
    export_csv(log, run_dir / "logs");
  };

  say("train " + std::to_string(data.train.size()) + " / val " + std::to_string(data.val.size()) + " / test " +
      std::to_string(data.test.size()) + " examples, " + std::to_string(batches.batches_per_epoch()) +
      " steps per epoch, " + std::to_string(net.param_count()) + " parameters");

  if (config.steps == 0) {
    validate_now(0);
    save(0);
    log.record_alphas(0, net);
  }

  double running_loss = 0.0;
  std::uint64_t running_n = 0;
  for (std::uint64_t t = 0; t < config.steps; ++t) {
    try {
      const Batch batch = batches.next();
      const bool record = t % config.record_every == 0;
      const PreactProbe probe = [&](int layer, std::span<const double> z) { log.record_preact(t, layer, z); };
      if (record)
        log.record_alphas(t, net);

      Tape tape(true, config.precision);
      ForwardOptions fo;
      fo.mode = Mode::Train;
      fo.rng = &dropout_rng;
      fo.probe = record ? &probe : nullptr;
      const Tensor logits = net.forward(tape, batch.x, fo);
      const Tensor loss = ops::softmax_cross_entropy(tape, logits, batch.y);
      if (!std::isfinite(loss.item()))
        throw NumericError("non-finite loss at step " + std::to_string(t));
      running_loss += loss.item();
      ++running_n;
      net.zero_grad();
      tape.backward(loss);
      optimizer.step(trainable);
    } catch (const NumericError& e) {
      fail(e.what());
      throw NumericError(std::string(e.what()) + " (last good checkpoint: " +
                         (result.checkpoints.empty() ? std::string("none") : result.checkpoints.back().path.string()) +
                         ")");
    }

    const std::uint64_t done = t + 1;
    if (hooks.after_step)
      hooks.after_step(done, net);
    const bool last = done == config.steps;
    if (done % config.val_every == 0 || last) {
      const double acc = validate_now(done);
      std::ostringstream line;
      line << "step " << done << "  loss " << std::fixed << std::setprecision(4) << running_loss / static_cast<double>(running_n)
           << "  val " << acc;
      say(line.str());
      running_loss = 0.0;
      running_n = 0;
    }
    if (done % checkpoint_every == 0 || last)
      save(done);
    if (last && done % config.record_every != 0)
      log.record_alphas(done, net);
  }

  const auto grid = default_shape_grid();
  for (int layer = 1; layer <= static_cast<int>(net.hidden_layers()); ++layer)
    log.shapes.push_back(export_shape(net, layer, grid));
  result.train_accuracy = evaluate(net, data.train, config.batch_size, config.precision);

  result.val_curve = log.val_curve;
  result.selected = result.checkpoints[post_hoc_select(log.val_curve, result.checkpoints, config.smoothing_window)];
  {
    Network chosen = restore_network(load_checkpoint(result.selected.path));
    result.test_accuracy = evaluate(chosen, data.test, config.batch_size, config.precision);
  }
  export_csv(log, run_dir / "logs");

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::ostringstream out;
  out << std::setprecision(17);
  out << "status = ok\n"
      << "steps = " << config.steps << '\n'
      << "checkpoints = " << result.checkpoints.size() << '\n'
      << "selected_step = " << result.selected.step << '\n'
      << "selected_checkpoint = " << fs::relative(result.selected.path, run_dir).string() << '\n'
      << "test_accuracy = " << result.test_accuracy << '\n'
      << "train_accuracy = " << result.train_accuracy << '\n'
      << "final_val_accuracy = " << (log.val_curve.empty() ? 0.0 : log.val_curve.back().accuracy) << '\n'
      << "seconds = " << std::setprecision(6) << seconds << '\n';
  write_text(run_dir / "result.txt", out.str());
  say("selected step " + std::to_string(result.selected.step) + ", test accuracy " + format_double(result.test_accuracy));
  return result;
}

RunResult run_training(const TrainConfig& config, const fs::path& run_dir, const TrainHooks& hooks) {
  config.validate();
  const TaskData data = prepare_data(config);
  Network net = build_network(config);
  return train(net, data, config, run_dir, hooks);
}

CheckpointEval evaluate_checkpoint(const fs::path& checkpoint, const std::string& task, const std::string& data_dir,
                                   std::size_t batch_size) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  TrainConfig cfg;
  const fs::path run_config = checkpoint.parent_path().parent_path() / "config.txt";
  if (fs::exists(run_config))
    cfg = TrainConfig::load(run_config);
  if (!task.empty())
    cfg.task = task;
  if (!data_dir.empty())
    cfg.data_dir = data_dir;
  if (cfg.task != "synthetic")
    parse_task(cfg.task);
  if (cfg.num_classes() != ckpt.num_classes)
    throw ConfigError("checkpoint has " + std::to_string(ckpt.num_classes) + " output classes, task " + cfg.task +
                      " has " + std::to_string(cfg.num_classes()));
  const Dataset test = load_test_set(cfg);
  Network net = restore_network(ckpt);
  return {evaluate(net, test, batch_size, cfg.precision), test.size(), cfg.task};
}

std::map<std::string, std::string> read_result(const fs::path& run_dir) {
  std::ifstream in(run_dir / "result.txt");
  if (!in)
    throw IoError("no result.txt in " + run_dir.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos)
      out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

} // namespace abunet
