#include "abunet/gradcheck_suites.hpp"

#include "abunet/activations.hpp"
#include "abunet/error.hpp"
#include "abunet/network.hpp"
#include "abunet/ops.hpp"
#include "abunet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace abunet {

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

// Values away from the kinks at 0 (ReLU, ELU, SELU, Pos clipping).
std::vector<double> smooth_values(Rng& rng, std::size_t n, double range) {
  std::vector<double> v(n);
  for (auto& x : v) {
    do
      x = uniform(rng, -range, range);
    while (std::abs(x) < 1e-3);
  }
  return v;
}

Tensor random_tensor(Rng& rng, Shape shape, double range = 2.0) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), smooth_values(rng, n, range));
}

// Weighted sum of an output, so every output element gets a distinct,
// non-trivial upstream gradient.
struct Projection {
  Tensor weights;
  Tensor operator()(Tape& tape, const Tensor& y) const { return ops::sum(tape, ops::mul(tape, y, weights)); }
};

Projection projection_for(Rng& rng, const Shape& shape) { return {random_tensor(rng, shape, 1.0)}; }

SuiteReport run_cases(const std::string& component, const SuiteOptions& opt, Rng& rng,
                      const std::function<GradCheckResult(Rng&)>& one_case) {
  SuiteReport report{component, opt.cases, {}};
  report.result.worst_name = component;
  for (std::size_t i = 0; i < opt.cases; ++i)
    report.result.merge(one_case(rng));
  return report;
}

void randomize_activation(Rng& rng, const Activation& act) {
  const auto& cfg = act.config();
  for (auto t : act.alpha_tensors()) {
    double v = 0.0;
    switch (cfg.family) {
    case ActivationConfig::Family::Scaled:
      v = uniform(rng, 0.2, 1.5);
      break;
    case ActivationConfig::Family::Blend:
      // Mixed signs for None/Abs/Pos/Soft; Nrm keeps a comfortably
      // non-zero sum by staying positive.
      v = cfg.norm == NormMode::Nrm ? uniform(rng, 0.05, 0.5) : uniform(rng, -0.4, 0.6);
      if (std::abs(v) < 1e-2)
        v = 0.3;
      break;
    case ActivationConfig::Family::Fixed:
      break;
    }
    t.values()[0] = v;
  }
  if (act.beta_tensor().defined()) {
    Tensor b = act.beta_tensor();
    b.values()[0] = uniform(rng, 0.5, 1.5);
  }
  // Pos needs at least one strictly positive raw weight.
  if (cfg.family == ActivationConfig::Family::Blend && cfg.norm == NormMode::Pos) {
    Tensor first = act.alpha_tensors().front();
    first.values()[0] = std::abs(first.values()[0]) + 0.1;
  }
}

} // namespace

std::vector<SuiteReport> activation_gradchecks(const SuiteOptions& opt) {
  std::vector<SuiteReport> reports;
  Rng rng(opt.seed);
  for (const auto& name : ActivationConfig::all_names()) {
    const auto cfg = ActivationConfig::parse(name);
    reports.push_back(run_cases(name, opt, rng, [&](Rng& r) {
      ParameterSet params;
      const Activation act = Activation::make(cfg, 1, params);
      randomize_activation(r, act);
      const Shape shape{pick(r, 1, 3), pick(r, 1, 6)};
      Tensor x = random_tensor(r, shape, 3.0);
      const Projection proj = projection_for(r, shape);
      std::vector<NamedTensor> checked{{name + "/x", x}};
      for (auto& p : params.all())
        checked.push_back({p.name, p.tensor});
      return check_gradients([&](Tape& tape) { return proj(tape, act.apply(tape, x)); }, checked, opt.eps,
                             opt.tolerance, opt.analytic_scale);
    }));
  }
  return reports;
}

std::vector<SuiteReport> layer_gradchecks(const SuiteOptions& opt) {
  std::vector<SuiteReport> reports;
  Rng rng(opt.seed + 1000);
  const auto check = [&](std::function<Tensor(Tape&)> loss, std::vector<NamedTensor> params) {
    return check_gradients(loss, params, opt.eps, opt.tolerance, opt.analytic_scale);
  };

  reports.push_back(run_cases("conv2d", opt, rng, [&](Rng& r) {
    const std::size_t k = std::array<std::size_t, 3>{1, 3, 5}[pick(r, 0, 2)];
    const Shape xs{pick(r, 1, 2), pick(r, 1, 6), pick(r, 1, 6), pick(r, 1, 3)};
    Tensor x = random_tensor(r, xs), kernel = random_tensor(r, {k, k, xs[3], pick(r, 1, 3)}, 0.5);
    Tensor bias = random_tensor(r, {kernel.dim(3)}, 0.5);
    const Projection proj = projection_for(r, {xs[0], xs[1], xs[2], kernel.dim(3)});
    return check([&](Tape& t) { return proj(t, ops::conv2d(t, x, kernel, bias)); },
                 {{"conv2d/x", x}, {"conv2d/kernel", kernel}, {"conv2d/bias", bias}});
  }));

  reports.push_back(run_cases("dense", opt, rng, [&](Rng& r) {
    const std::size_t b = pick(r, 1, 4), in = pick(r, 1, 6), out = pick(r, 1, 6);
    Tensor x = random_tensor(r, {b, in}), w = random_tensor(r, {in, out}), bias = random_tensor(r, {out});
    const Projection proj = projection_for(r, {b, out});
    return check([&](Tape& t) { return proj(t, ops::add_bias(t, ops::matmul(t, x, w), bias)); },
                 {{"dense/x", x}, {"dense/weight", w}, {"dense/bias", bias}});
  }));

  for (const auto kind : {ops::PoolKind::Max, ops::PoolKind::Average}) {
    const std::string name = kind == ops::PoolKind::Max ? "max_pool" : "avg_pool";
    reports.push_back(run_cases(name, opt, rng, [&](Rng& r) {
      const Shape xs{pick(r, 1, 2), pick(r, 1, 7), pick(r, 1, 7), pick(r, 1, 3)};
      // Distinct values spaced well beyond eps so window maxima never swap.
      std::vector<double> v(shape_size(xs));
      std::iota(v.begin(), v.end(), 0.0);
      std::shuffle(v.begin(), v.end(), r);
      for (auto& e : v)
        e = e * 0.01 - 1.0;
      Tensor x(xs, v);
      Tape shape_probe(false);
      Tensor probe_out = ops::pool2d(shape_probe, x, kind);
      const Projection proj = projection_for(r, probe_out.shape());
      return check([&](Tape& t) { return proj(t, ops::pool2d(t, x, kind)); }, {{name + "/x", x}});
    }));
  }

  reports.push_back(run_cases("dropout", opt, rng, [&](Rng& r) {
    const Shape xs{pick(r, 1, 3), pick(r, 1, 8)};
    Tensor x = random_tensor(r, xs);
    std::vector<double> mask(x.size());
    for (auto& m : mask)
      m = uniform01(r) < 0.5 ? 1.0 : 0.0;
    const Projection proj = projection_for(r, xs);
    return check([&](Tape& t) { return proj(t, ops::dropout(t, x, mask, 0.5)); }, {{"dropout/x", x}});
  }));

  for (const bool training : {true, false}) {
    const std::string name = training ? "batch_norm(train)" : "batch_norm(eval)";
    reports.push_back(run_cases(name, opt, rng, [&](Rng& r) {
      const std::size_t c = pick(r, 1, 3);
      const Shape xs = pick(r, 0, 1) ? Shape{pick(r, 2, 5), c} : Shape{pick(r, 2, 3), pick(r, 1, 3), pick(r, 1, 3), c};
      Tensor x = random_tensor(r, xs), gamma = random_tensor(r, {c}), beta = random_tensor(r, {c});
      ops::BatchNormState state(c);
      for (std::size_t k = 0; k < c; ++k) {
        state.running_mean[k] = uniform(r, -0.5, 0.5);
        state.running_var[k] = uniform(r, 0.5, 2.0);
      }
      const Projection proj = projection_for(r, xs);
      return check(
          [&, state](Tape& t) mutable {
            ops::BatchNormState local = state;
            return proj(t, ops::batch_norm(t, x, gamma, beta, local, training));
          },
          {{name + "/x", x}, {name + "/gamma", gamma}, {name + "/beta", beta}});
    }));
  }

  reports.push_back(run_cases("flatten", opt, rng, [&](Rng& r) {
    const Shape xs{pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3)};
    Tensor x = random_tensor(r, xs);
    const Shape flat{xs[0], xs[1] * xs[2] * xs[3]};
    const Projection proj = projection_for(r, flat);
    return check([&](Tape& t) { return proj(t, ops::reshape(t, x, flat)); }, {{"flatten/x", x}});
  }));

  reports.push_back(run_cases("softmax_cross_entropy", opt, rng, [&](Rng& r) {
    const std::size_t b = pick(r, 1, 5), c = pick(r, 2, 6);
    Tensor logits = random_tensor(r, {b, c}, 3.0);
    std::vector<int> labels(b);
    for (auto& l : labels)
      l = static_cast<int>(pick(r, 0, c - 1));
    return check([&](Tape& t) { return ops::softmax_cross_entropy(t, logits, labels); },
                 {{"softmax_cross_entropy/logits", logits}});
  }));

  reports.push_back(run_cases("elementwise", opt, rng, [&](Rng& r) {
    const Shape xs{pick(r, 1, 3), pick(r, 1, 5)};
    Tensor a = random_tensor(r, xs), b = random_tensor(r, xs), s = random_tensor(r, {1});
    const Projection proj = projection_for(r, xs);
    return check(
        [&](Tape& t) {
          Tensor y = ops::add(t, ops::mul(t, a, b), ops::scale(t, ops::scale(t, a, s), 0.7));
          return proj(t, y);
        },
        {{"add_mul/a", a}, {"add_mul/b", b}, {"scalar_mul/s", s}});
  }));

  for (const auto mode : {NormMode::Nrm, NormMode::Abs, NormMode::Pos, NormMode::Soft}) {
    const std::string name = "normalize_" + std::string(norm_name(mode));
    reports.push_back(run_cases(name, opt, rng, [&](Rng& r) {
      std::vector<Tensor> raw;
      for (std::size_t j = 0; j < kAbuSize; ++j) {
        double v = mode == NormMode::Nrm ? uniform(r, 0.05, 0.5) : uniform(r, -0.4, 0.6);
        if (std::abs(v) < 1e-2)
          v = 0.25;
        raw.push_back(Tensor::scalar(v));
      }
      if (mode == NormMode::Pos)
        raw[0].values()[0] = std::abs(raw[0].values()[0]) + 0.1;
      const Projection proj = projection_for(r, {kAbuSize});
      std::vector<NamedTensor> named;
      for (std::size_t j = 0; j < raw.size(); ++j)
        named.push_back({name + "/raw" + std::to_string(j + 1), raw[j]});
      return check([&](Tape& t) { return proj(t, ops::normalize_weights(t, ops::stack(t, raw), mode)); }, named);
    }));
  }
  return reports;
}

namespace {

// Smallest gap between the two largest entries of any max-pool window on
// the tape. Ties between exact zeros (rectified units) stay tied under small
// perturbations and are ignored.
double max_pool_margin(const Tape& tape) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& node : tape.nodes()) {
    if (node.kind != OpKind::MaxPool)
      continue;
    const Tensor& x = node.inputs[0];
    const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const std::size_t oh = node.output.dim(1), ow = node.output.dim(2);
    const std::size_t pad_h = ((oh - 1) * 2 + 3 - std::min(h, (oh - 1) * 2 + 3)) / 2;
    const std::size_t pad_w = ((ow - 1) * 2 + 3 - std::min(w, (ow - 1) * 2 + 3)) / 2;
    const auto v = x.values();
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
          for (std::size_t ch = 0; ch < c; ++ch) {
            double top = -std::numeric_limits<double>::infinity(), second = top;
            for (std::size_t ky = 0; ky < 3; ++ky)
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * 2 + ky) - static_cast<std::ptrdiff_t>(pad_h);
                const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox * 2 + kx) - static_cast<std::ptrdiff_t>(pad_w);
                if (y < 0 || xx < 0 || y >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w))
                  continue;
                const double val = v[((n * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(xx)) * c + ch];
                if (val > top) {
                  second = top;
                  top = val;
                } else if (val > second) {
                  second = val;
                }
              }
            if (std::isfinite(second) && !(top == 0.0 && second == 0.0))
              margin = std::min(margin, top - second);
          }
  }
  return margin;
}

bool has_kink_at_zero(const ActivationConfig& cfg) {
  return cfg.family == ActivationConfig::Family::Blend || cfg.base == BaseKind::ReLU || cfg.base == BaseKind::SELU;
}

} // namespace

std::vector<SuiteReport> network_gradchecks(const SuiteOptions& opt) {
  std::vector<SuiteReport> reports;
  const auto& names = ActivationConfig::all_names();
  const std::size_t per_variant = std::min(opt.cases, names.size());
  ArchDims tiny{8, 3, 4, 8, 6, false};
  Rng rng(opt.seed + 2000);
  // Central differences are only meaningful where the loss is smooth within
  // +-eps: max-pool windows need a clear winner and kinked activations need
  // pre-activations away from zero. Inputs are redrawn until both hold.
  const double kink_margin = 1e-4;
  for (const auto variant : {Variant::SMCN, Variant::SMCN10, Variant::SMCN_S, Variant::SMCN_BN}) {
    SuiteReport report{"network/" + std::string(variant_name(variant)), per_variant, {}};
    for (std::size_t i = 0; i < per_variant; ++i) {
      const auto cfg = ActivationConfig::parse(names[i]);
      Network net = Network::build_smcn(variant, cfg, 3, opt.seed + i, tiny);
      for (const auto& act : net.activations())
        randomize_activation(rng, act);
      const std::size_t batch = 3;
      std::vector<int> labels{0, 1, 2};
      // BN running statistics move on every training forward; evaluate
      // each pass from the same starting state.
      const auto bn_initial = net.batch_norms();
      Rng mask_rng(opt.seed + 77 + i);

      Tensor x;
      std::vector<std::vector<double>> masks;
      for (int attempt = 0;; ++attempt) {
        x = random_tensor(rng, {batch, tiny.input_hw, tiny.input_hw, tiny.input_channels}, 1.5);
        masks.clear();
        double preact_margin = std::numeric_limits<double>::infinity();
        const PreactProbe probe = [&](int, std::span<const double> z) {
          for (double v : z)
            preact_margin = std::min(preact_margin, std::abs(v));
        };
        ForwardOptions fo;
        fo.mode = Mode::Train;
        fo.rng = &mask_rng;
        fo.frozen_masks = &masks;
        fo.probe = has_kink_at_zero(cfg) ? &probe : nullptr;
        Tape scan;
        net.forward(scan, x, fo);
        net.batch_norms() = bn_initial;
        if ((max_pool_margin(scan) >= kink_margin && preact_margin >= kink_margin) || attempt == 200)
          break;
      }

      auto loss = [&](Tape& t) {
        net.batch_norms() = bn_initial;
        ForwardOptions fo;
        fo.mode = Mode::Train;
        fo.frozen_masks = &masks;
        return ops::softmax_cross_entropy(t, net.forward(t, x, fo), labels);
      };
      std::vector<NamedTensor> checked;
      for (auto& p : net.params().all())
        checked.push_back({cfg.name() + ":" + p.name, p.tensor});
      report.result.merge(check_gradients(loss, checked, opt.eps, opt.tolerance, opt.analytic_scale));
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

std::vector<SuiteReport> gradcheck_scope(const std::string& scope, const SuiteOptions& options) {
  if (scope != "activations" && scope != "network" && scope != "all")
    throw ConfigError("unknown gradcheck scope '" + scope + "' (expected activations, network or all)");
  std::vector<SuiteReport> out;
  auto append = [&](std::vector<SuiteReport> r) { out.insert(out.end(), r.begin(), r.end()); };
  if (scope != "network")
    append(activation_gradchecks(options));
  if (scope != "activations") {
    append(layer_gradchecks(options));
    append(network_gradchecks(options));
  }
  return out;
}

} // namespace abunet
