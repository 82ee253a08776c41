#include "abunet/abunet.h"

#include "abunet/analysis.hpp"
#include "abunet/checkpoint.hpp"
#include "abunet/error.hpp"
#include "abunet/gradcheck_suites.hpp"
#include "abunet/sweep.hpp"
#include "abunet/training.hpp"

#include <cstring>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>

struct abunet_config {
  abunet::TrainConfig config;
};

struct abunet_network {
  abunet::Network net;
};

namespace {

thread_local std::string last_error;

abunet_status fail(abunet_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <typename F>
abunet_status guard(F&& body) {
  try {
    last_error.clear();
    return body();
  } catch (const abunet::ConfigError& e) {
    return fail(ABUNET_CONFIG_ERROR, e.what());
  } catch (const abunet::ShapeError& e) {
    return fail(ABUNET_SHAPE_ERROR, e.what());
  } catch (const abunet::NumericError& e) {
    return fail(ABUNET_NUMERIC_ERROR, e.what());
  } catch (const abunet::IoError& e) {
    return fail(ABUNET_IO_ERROR, e.what());
  } catch (const std::exception& e) {
    return fail(ABUNET_INTERNAL_ERROR, e.what());
  } catch (...) {
    return fail(ABUNET_INTERNAL_ERROR, "unknown error");
  }
}

abunet_status require(const void* p, const char* what) {
  if (!p)
    throw abunet::ConfigError(std::string(what) + " must not be NULL");
  return ABUNET_OK;
}

std::string str_or_empty(const char* s) { return s ? s : ""; }

void emit(abunet_line_fn fn, void* user, const std::string& text) {
  if (!fn)
    return;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    fn(line.c_str(), user);
}

} // namespace

extern "C" {

const char* abunet_version(void) { return "1.0.0"; }

const char* abunet_status_name(abunet_status status) {
  switch (status) {
  case ABUNET_OK: return "ok";
  case ABUNET_RUN_FAILURE: return "run failure";
  case ABUNET_CONFIG_ERROR: return "configuration error";
  case ABUNET_VERIFICATION_FAILURE: return "verification failure";
  case ABUNET_IO_ERROR: return "i/o error";
  case ABUNET_NUMERIC_ERROR: return "numeric error";
  case ABUNET_SHAPE_ERROR: return "shape error";
  case ABUNET_INTERNAL_ERROR: return "internal error";
  }
  return "unknown status";
}

const char* abunet_last_error(void) { return last_error.c_str(); }

abunet_status abunet_config_create(abunet_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new abunet_config{};
    return ABUNET_OK;
  });
}

abunet_status abunet_config_load(const char* path, abunet_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto cfg = std::make_unique<abunet_config>();
    cfg->config = abunet::TrainConfig::load(path);
    *out = cfg.release();
    return ABUNET_OK;
  });
}

abunet_status abunet_config_set(abunet_config* config, const char* key, const char* value) {
  return guard([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->config.set(key, value);
    return ABUNET_OK;
  });
}

abunet_status abunet_config_validate(const abunet_config* config) {
  return guard([&] {
    require(config, "config");
    config->config.validate();
    return ABUNET_OK;
  });
}

abunet_status abunet_config_text(const abunet_config* config, char* buf, size_t capacity, size_t* needed) {
  return guard([&] {
    require(config, "config");
    const std::string text = config->config.to_text();
    if (needed)
      *needed = text.size() + 1;
    if (buf && capacity > 0) {
      const size_t n = std::min(capacity - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
    return ABUNET_OK;
  });
}

void abunet_config_destroy(abunet_config* config) { delete config; }

abunet_status abunet_train(const abunet_config* config, const char* run_dir, abunet_line_fn progress, void* user,
                           abunet_train_result* result) {
  return guard([&] {
    require(config, "config");
    require(run_dir, "run_dir");
    abunet::TrainHooks hooks;
    hooks.progress = [&](const std::string& line) { emit(progress, user, line); };
    const auto r = abunet::run_training(config->config, run_dir, hooks);
    if (result)
      *result = {r.test_accuracy, r.train_accuracy, r.selected.step, r.checkpoints.size()};
    return ABUNET_OK;
  });
}

abunet_status abunet_eval(const char* checkpoint, const char* task, const char* data_dir, double* accuracy,
                          size_t* examples) {
  return guard([&] {
    require(checkpoint, "checkpoint");
    const auto r = abunet::evaluate_checkpoint(checkpoint, str_or_empty(task), str_or_empty(data_dir));
    if (accuracy)
      *accuracy = r.accuracy;
    if (examples)
      *examples = r.examples;
    return ABUNET_OK;
  });
}

abunet_status abunet_gradcheck(const char* scope, uint64_t seed, size_t cases, double analytic_scale,
                               abunet_line_fn report, void* user) {
  return guard([&] {
    require(scope, "scope");
    abunet::SuiteOptions opt;
    opt.seed = seed;
    opt.cases = cases;
    opt.analytic_scale = analytic_scale;
    const auto reports = abunet::gradcheck_scope(scope, opt);
    bool ok = true;
    for (const auto& r : reports) {
      std::ostringstream line;
      line << (r.result.failures ? "FAIL " : "ok   ") << std::left << std::setw(28) << r.component << " cases "
           << std::setw(4) << r.cases << " values " << std::setw(7) << r.result.checked << " worst rel "
           << std::scientific << std::setprecision(3) << r.result.worst_relative;
      if (!r.result.worst_name.empty())
        line << " (" << r.result.worst_name << "[" << r.result.worst_index << "])";
      emit(report, user, line.str());
      if (r.result.failures) {
        ok = false;
        const std::size_t shown = std::min<std::size_t>(r.result.failure_messages.size(), 5);
        for (std::size_t i = 0; i < shown; ++i)
          emit(report, user, "       " + r.result.failure_messages[i]);
        if (r.result.failures > shown)
          emit(report, user, "       ... " + std::to_string(r.result.failures - shown) + " more");
      }
    }
    if (!ok)
      return fail(ABUNET_VERIFICATION_FAILURE, "gradient check failed");
    return ABUNET_OK;
  });
}

abunet_status abunet_analyze(const char* const* run_dirs, size_t count, abunet_line_fn report, void* user) {
  return guard([&] {
    if (count == 0)
      throw abunet::ConfigError("analyze needs at least one run directory");
    require(run_dirs, "run_dirs");
    std::vector<abunet::RunAnalysis> runs;
    for (size_t i = 0; i < count; ++i) {
      require(run_dirs[i], "run directory");
      runs.push_back(abunet::analyze_run(run_dirs[i]));
    }
    emit(report, user, abunet::analysis_report(runs));
    return ABUNET_OK;
  });
}

abunet_status abunet_sweep(const char* grid_file, const char* out_dir, const char* data_dir, abunet_line_fn report,
                           void* user, size_t* failures) {
  return guard([&] {
    require(grid_file, "grid_file");
    require(out_dir, "out_dir");
    abunet::SweepOptions opt;
    opt.out_dir = out_dir;
    opt.data_dir = str_or_empty(data_dir);
    opt.progress = [&](const std::string& line) { emit(report, user, line); };
    const auto r = abunet::run_sweep(abunet::load_grid(grid_file), opt);
    emit(report, user, abunet::format_table(r.table));
    if (failures)
      *failures = r.failures;
    if (r.failures)
      return fail(ABUNET_RUN_FAILURE, std::to_string(r.failures) + " of " + std::to_string(r.runs.size()) +
                                          " runs failed; see their result.txt files");
    return ABUNET_OK;
  });
}

abunet_status abunet_network_create(const char* arch, const char* activation, int num_classes, uint64_t seed,
                                    const char* dims, abunet_network** out) {
  return guard([&] {
    require(arch, "arch");
    require(activation, "activation");
    require(out, "out");
    abunet::TrainConfig shape;
    shape.dims = dims ? dims : "full";
    *out = new abunet_network{abunet::Network::build_smcn(abunet::parse_variant(arch),
                                                          abunet::ActivationConfig::parse(activation), num_classes,
                                                          seed, shape.arch_dims())};
    return ABUNET_OK;
  });
}

abunet_status abunet_network_load(const char* checkpoint, abunet_network** out) {
  return guard([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    *out = new abunet_network{abunet::restore_network(abunet::load_checkpoint(checkpoint))};
    return ABUNET_OK;
  });
}

abunet_status abunet_network_save(const abunet_network* net, const char* path) {
  return guard([&] {
    require(net, "net");
    require(path, "path");
    abunet::save_checkpoint(path, abunet::snapshot(net->net, 0));
    return ABUNET_OK;
  });
}

abunet_status abunet_network_param_count(const abunet_network* net, size_t* count) {
  return guard([&] {
    require(net, "net");
    require(count, "count");
    *count = net->net.param_count();
    return ABUNET_OK;
  });
}

abunet_status abunet_network_num_classes(const abunet_network* net, int* classes) {
  return guard([&] {
    require(net, "net");
    require(classes, "classes");
    *classes = net->net.num_classes();
    return ABUNET_OK;
  });
}

abunet_status abunet_network_predict(abunet_network* net, const uint8_t* images, size_t batch, double* logits) {
  return guard([&] {
    require(net, "net");
    require(images, "images");
    require(logits, "logits");
    abunet::Dataset data;
    data.num_classes = net->net.num_classes();
    data.images.assign(images, images + batch * abunet::kImageValues);
    data.labels.assign(batch, 0);
    std::vector<std::size_t> idx(batch);
    for (std::size_t i = 0; i < batch; ++i)
      idx[i] = i;
    const abunet::Batch b = abunet::assemble_batch(data, idx);
    abunet::Tape tape(false);
    const abunet::Tensor out = net->net.forward(tape, b.x);
    std::copy(out.values().begin(), out.values().end(), logits);
    return ABUNET_OK;
  });
}

void abunet_network_destroy(abunet_network* net) { delete net; }

} // extern "C"
