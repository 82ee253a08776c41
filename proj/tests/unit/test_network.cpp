#include "abunet/error.hpp"
#include "abunet/gradcheck_suites.hpp"
#include "abunet/network.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace abunet;

namespace {

Tensor random_batch(std::size_t b, const ArchDims& dims, Rng& rng) {
  Tensor x(Shape{b, dims.input_hw, dims.input_hw, dims.input_channels});
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : x.values())
    v = n(rng);
  return x;
}

void set_one_hot(Network& net, std::size_t member) {
  for (auto& act : net.activations())
    for (std::size_t j = 0; j < act.alpha_tensors().size(); ++j) {
      Tensor a = act.alpha_tensors()[j];
      a.values()[0] = j == member ? 1.0 : 0.0;
    }
}

} // namespace

TEST(Architecture, VanillaParameterCount) {
  const auto net = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 10, 1);
  EXPECT_EQ(net.param_count(), 1797514u);
  EXPECT_EQ(net.hidden_layers(), 6u);
}

TEST(Architecture, RepeatedBlockParameterCount) {
  const auto net = Network::build_smcn(Variant::SMCN10, ActivationConfig::parse("relu"), 10, 1);
  EXPECT_EQ(net.param_count(), 2010762u);
  EXPECT_EQ(net.hidden_layers(), 10u);
  EXPECT_EQ(net.count_layers(LayerKind::Conv2D), 8u);
  EXPECT_EQ(net.count_layers(LayerKind::Dropout), 5u);
}

TEST(Architecture, ActivationParametersAddUp) {
  const std::size_t base = 1797514;
  EXPECT_EQ(Network::build_smcn(Variant::SMCN, ActivationConfig::parse("a_tanh"), 10, 1).param_count(), base + 6);
  EXPECT_EQ(Network::build_smcn(Variant::SMCN, ActivationConfig::parse("abu"), 10, 1).param_count(), base + 6 * 6);
  EXPECT_EQ(Network::build_smcn(Variant::SMCN, ActivationConfig::parse("abu_pos"), 10, 1).param_count(),
            base + 6 * 6);
  // CIFAR-100 head: 192 * 90 extra weights and 90 extra biases.
  EXPECT_EQ(Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 100, 1).param_count(),
            base + 192 * 90 + 90);
}

TEST(Architecture, AveragePoolingVariantHasNoDropoutOrBatchNorm) {
  const auto net = Network::build_smcn(Variant::SMCN_S, ActivationConfig::parse("tanh"), 10, 1);
  EXPECT_EQ(net.count_layers(LayerKind::Dropout), 0u);
  EXPECT_EQ(net.count_layers(LayerKind::BatchNorm), 0u);
  EXPECT_EQ(net.count_layers(LayerKind::AvgPool), 2u);
  EXPECT_EQ(net.count_layers(LayerKind::MaxPool), 0u);
}

TEST(Architecture, BatchNormVariantPlacement) {
  const auto before = Network::build_smcn(Variant::SMCN_BN, ActivationConfig::parse("relu"), 10, 1);
  EXPECT_EQ(before.count_layers(LayerKind::BatchNorm), 6u);
  EXPECT_EQ(before.count_layers(LayerKind::Dropout), 0u);
  const auto& layers = before.layers();
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::Activation)
      EXPECT_EQ(layers[i - 1].kind, LayerKind::BatchNorm);

  ArchDims after_dims;
  after_dims.bn_after_activation = true;
  const auto after = Network::build_smcn(Variant::SMCN_BN, ActivationConfig::parse("relu"), 10, 1, after_dims);
  const auto& al = after.layers();
  for (std::size_t i = 0; i < al.size(); ++i)
    if (al[i].kind == LayerKind::Activation)
      EXPECT_EQ(al[i + 1].kind, LayerKind::BatchNorm);
}

TEST(Architecture, SpatialShapesAndFlattenWidth) {
  const auto net = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 10, 1);
  for (const auto& l : net.layers())
    if (l.kind == LayerKind::Flatten)
      EXPECT_EQ(l.in, 4096u);
  EXPECT_EQ(net.params().at("dense1/weight").tensor.shape(), (Shape{4096, 384}));
  EXPECT_EQ(net.params().at("conv1/kernel").tensor.shape(), (Shape{5, 5, 3, 64}));
}

TEST(Architecture, BiasInitialization) {
  const auto net = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 10, 1);
  for (double v : net.params().at("conv1/bias").tensor.values())
    EXPECT_EQ(v, 0.0);
  for (const char* name : {"conv2/bias", "conv3/bias", "dense1/bias", "logits/bias"})
    for (double v : net.params().at(name).tensor.values())
      EXPECT_EQ(v, 0.1);
}

TEST(Architecture, UnknownVariantAndBadClassCount) {
  EXPECT_THROW(parse_variant("resnet"), ConfigError);
  EXPECT_EQ(parse_variant("smcn_bn"), Variant::SMCN_BN);
  EXPECT_THROW(Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 1, 1), ConfigError);
}

TEST(HeInit, EmpiricalStandardDeviation) {
  Rng rng(3);
  for (std::size_t fan_in : {75u, 4096u, 1u}) {
    const auto s = he_init(100000, fan_in, rng);
    double mean = 0.0, sq = 0.0;
    for (double v : s)
      mean += v;
    mean /= s.size();
    for (double v : s)
      sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / s.size());
    EXPECT_NEAR(sd / std::sqrt(2.0 / fan_in), 1.0, 0.02) << fan_in;
  }
  EXPECT_NEAR(std::sqrt(2.0 / 75), 0.1633, 1e-4);
  EXPECT_NEAR(std::sqrt(2.0 / 4096), 0.02210, 1e-5);
  EXPECT_THROW(he_init(3, 0, rng), ConfigError);
}

TEST(Forward, EvalModeIsDeterministic) {
  const ArchDims dims = ArchDims::desk();
  auto net = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("abu"), 10, 4, dims);
  Rng rng(5);
  const Tensor x = random_batch(3, dims, rng);
  Tape t(false);
  const Tensor a = net.forward(t, x), b = net.forward(t, x);
  EXPECT_EQ(a.shape(), (Shape{3, 10}));
  EXPECT_EQ(a.values()[0], b.values()[0]);
  for (std::size_t i = 0; i < a.size(); ++i)
    ASSERT_EQ(a.values()[i], b.values()[i]);
}

TEST(Forward, SameSeedSameWeights) {
  const auto a = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 10, 42, ArchDims::desk());
  const auto b = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 10, 42, ArchDims::desk());
  const auto c = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 10, 43, ArchDims::desk());
  EXPECT_EQ(a.params().at("conv2/kernel").tensor.values()[7], b.params().at("conv2/kernel").tensor.values()[7]);
  EXPECT_NE(a.params().at("conv2/kernel").tensor.values()[7], c.params().at("conv2/kernel").tensor.values()[7]);
}

TEST(Forward, OneHotReluBlendMatchesFixedRelu) {
  for (auto variant : {Variant::SMCN, Variant::SMCN10, Variant::SMCN_S, Variant::SMCN_BN}) {
    auto fixed = Network::build_smcn(variant, ActivationConfig::parse("relu"), 10, 11, ArchDims::desk());
    auto blend = Network::build_smcn(variant, ActivationConfig::parse("abu"), 10, 11, ArchDims::desk());
    set_one_hot(blend, 2);
    Rng rng(6);
    for (int batch = 0; batch < 3; ++batch) {
      const Tensor x = random_batch(4, ArchDims::desk(), rng);
      Tape t(false);
      const Tensor a = fixed.forward(t, x), b = blend.forward(t, x);
      for (std::size_t i = 0; i < a.size(); ++i)
        ASSERT_NEAR(a.values()[i], b.values()[i], 1e-12) << variant_name(variant);
    }
  }
}

TEST(Forward, RejectsWrongInputShape) {
  auto net = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 10, 1, ArchDims::desk());
  Tape t(false);
  EXPECT_THROW(net.forward(t, Tensor(Shape{2, 28, 28, 3})), ShapeError);
  EXPECT_THROW(net.forward(t, Tensor(Shape{2, 32, 32})), ShapeError);
}

TEST(Forward, TrainingDropoutNeedsRandomness) {
  auto net = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 10, 1, ArchDims::desk());
  Tape t(false);
  ForwardOptions opt;
  opt.mode = Mode::Train;
  EXPECT_THROW(net.forward(t, Tensor(Shape{2, 32, 32, 3}), opt), ConfigError);
}

TEST(Forward, NonFiniteValuesNameTheLayer) {
  auto net = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 10, 1, ArchDims::desk());
  net.params().at("conv3/bias").tensor.values()[0] = std::nan("");
  Tape t(false);
  try {
    net.forward(t, Tensor(Shape{1, 32, 32, 3}));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("conv3"), std::string::npos);
  }
}

TEST(Forward, ProbeSeesEveryPreactivation) {
  const ArchDims dims = ArchDims::desk();
  auto net = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("tanh"), 10, 1, dims);
  std::vector<std::pair<int, std::size_t>> seen;
  const PreactProbe probe = [&](int layer, std::span<const double> v) { seen.emplace_back(layer, v.size()); };
  ForwardOptions opt;
  opt.probe = &probe;
  Tape t(false);
  Rng rng(2);
  net.forward(t, random_batch(2, dims, rng), opt);
  ASSERT_EQ(seen.size(), 6u);
  for (int i = 0; i < 6; ++i)
    EXPECT_EQ(seen[i].first, i + 1);
  EXPECT_EQ(seen[0].second, 2u * 32 * 32 * 16);
  EXPECT_EQ(seen[4].second, 2u * 96);
}

TEST(Forward, FrozenMasksReplayTrainingForward) {
  const ArchDims dims = ArchDims::desk();
  auto net = Network::build_smcn(Variant::SMCN, ActivationConfig::parse("relu"), 10, 1, dims);
  Rng rng(2);
  const Tensor x = random_batch(2, dims, rng);
  std::vector<std::vector<double>> masks;
  ForwardOptions opt;
  opt.mode = Mode::Train;
  opt.rng = &rng;
  opt.frozen_masks = &masks;
  Tape t(false);
  const Tensor a = net.forward(t, x, opt);
  EXPECT_EQ(masks.size(), 3u);
  const Tensor b = net.forward(t, x, opt);
  for (std::size_t i = 0; i < a.size(); ++i)
    ASSERT_EQ(a.values()[i], b.values()[i]);
}

TEST(Dropout, InvertedScalingPreservesExpectation) {
  Rng rng(21);
  const std::size_t n = 20;
  Tensor x(Shape{n});
  for (std::size_t i = 0; i < n; ++i)
    x.values()[i] = 0.5 + static_cast<double>(i);
  std::vector<double> acc(n, 0.0), mask(n);
  const int draws = 10000;
  Tape t(false);
  for (int d = 0; d < draws; ++d) {
    for (auto& m : mask)
      m = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    const Tensor y = ops::dropout(t, x, mask, 0.5);
    for (std::size_t i = 0; i < n; ++i)
      acc[i] += y.values()[i];
  }
  double ratio = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(acc[i] / draws / x.values()[i], 1.0, 0.05);
    ratio += acc[i] / draws / x.values()[i] / n;
  }
  EXPECT_NEAR(ratio, 1.0, 0.02);
}

TEST(BatchNorm, ConstantChannelMapsToShift) {
  ops::BatchNormState state(2);
  Tensor x(Shape{4, 2}, std::vector<double>{3, 1, 3, 2, 3, 3, 3, 4});
  Tensor gamma(Shape{2}, std::vector<double>{2.0, 1.0}), beta(Shape{2}, std::vector<double>{0.7, 0.0});
  Tape t(false);
  const Tensor y = ops::batch_norm(t, x, gamma, beta, state, true);
  for (std::size_t b = 0; b < 4; ++b)
    EXPECT_NEAR(y.values()[b * 2], 0.7, 1e-12);
  double mean = 0.0, sq = 0.0;
  for (std::size_t b = 0; b < 4; ++b)
    mean += y.values()[b * 2 + 1] / 4;
  for (std::size_t b = 0; b < 4; ++b)
    sq += std::pow(y.values()[b * 2 + 1] - mean, 2) / 4;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(sq, 1.0, 1e-4);
  // Running statistics moved toward the batch.
  EXPECT_NEAR(state.running_mean[0], 0.01 * 3.0, 1e-12);
  EXPECT_NEAR(state.running_var[1], 0.99 + 0.01 * 1.25, 1e-12);
}

TEST(BatchNorm, SingleSampleTrainingIsRejected) {
  ops::BatchNormState state(3);
  Tensor gamma(Shape{3}, std::vector<double>(3, 1.0)), beta(Shape{3});
  Tape t(false);
  EXPECT_THROW(ops::batch_norm(t, Tensor(Shape{1, 3}), gamma, beta, state, true), ShapeError);
  EXPECT_NO_THROW(ops::batch_norm(t, Tensor(Shape{1, 3}), gamma, beta, state, false));
}

TEST(BatchNorm, CancelsPrecedingScale) {
  Rng rng(31);
  Tensor x(Shape{16, 5});
  for (auto& v : x.values())
    v = uniform01(rng) * 4 - 2;
  Tensor gamma(Shape{5}, std::vector<double>(5, 1.3)), beta(Shape{5}, std::vector<double>(5, -0.2));
  for (double c : {2.0, 10.0, 1e4}) {
    ops::BatchNormState s1(5), s2(5);
    Tape t(false);
    const Tensor a = ops::batch_norm(t, x, gamma, beta, s1, true);
    const Tensor b = ops::batch_norm(t, ops::scale(t, x, c), gamma, beta, s2, true);
    for (std::size_t i = 0; i < a.size(); ++i)
      EXPECT_NEAR(b.values()[i], a.values()[i], 1e-5 * std::max(1.0, std::abs(a.values()[i]))) << c;
  }
}

TEST(NetworkGradients, TinyNetworksMatchFiniteDifferences) {
  SuiteOptions opt;
  opt.seed = 3;
  opt.cases = 17;
  for (const auto& r : network_gradchecks(opt))
    EXPECT_TRUE(r.result.passed()) << r.component << ": "
                                   << (r.result.failure_messages.empty() ? "" : r.result.failure_messages.front());
}
