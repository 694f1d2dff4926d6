#include <gtest/gtest.h>

#include "gfsr/checkpoint.hpp"
#include "gfsr/error.hpp"
#include "gfsr/network.hpp"
#include "oracles.hpp"

using namespace gfsr;

namespace {

// Gradient of <logits, r> by backward vs central differences.
double logit_gradient_error(const ArchSpec& arch, Mode mode, std::uint64_t seed) {
  auto net = init_network<double>(arch, seed);
  const auto x = oracle::random_tensor<double>({2, arch.in_channels, arch.in_rows, arch.in_cols}, seed + 1);
  const auto r = oracle::random_tensor<double>({2, arch.class_count()}, seed + 2);
  const auto trace = forward(net, x, mode, 99);
  const auto analytic = oracle::flatten(backward(net, trace, r));
  const auto numeric = oracle::numeric_gradient(net, [&](const BasicNetwork<double>& n) {
    return oracle::dot(forward(n, x, mode, 99).logits(), r);
  });
  return oracle::rel_error(analytic, numeric);
}

}  // namespace

TEST(Network, DefaultArchShapes) {
  const auto arch = default_arch(2);
  const auto net = init_network<float>(arch, 1);
  const auto trace = forward(net, Tensor<float>({1, 3, 64, 64}, 0.1f), Mode::eval);
  EXPECT_EQ(trace.activation(arch, arch.target_layer).shape(), (Shape{1, 64, 16, 16}));
  EXPECT_EQ(trace.logits().shape(), (Shape{1, 2}));
  EXPECT_EQ(arch.embed_layer, arch.target_layer);
}

TEST(Network, InitIsSeededAndHeScaled) {
  const auto arch = default_arch(3);
  EXPECT_EQ(init_network<float>(arch, 5).params, init_network<float>(arch, 5).params);
  EXPECT_NE(init_network<float>(arch, 5).params, init_network<float>(arch, 6).params);
  const auto net = init_network<double>(arch, 11);
  const auto& w = net.params[arch.layer_index("conv3")].weight;  // fan_in = 32*9
  double sum = 0, sq = 0;
  for (double v : w.values()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(w.size());
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 2.0 / (32 * 9), 0.1 * 2.0 / (32 * 9));
  for (double b : net.params[arch.layer_index("conv3")].bias.values()) EXPECT_EQ(b, 0.0);
}

TEST(Network, EvalDropoutIsIdentityAndTrainIsSeeded) {
  const auto arch = default_arch(2, 16);
  const auto net = init_network<float>(arch, 3);
  const auto x = oracle::random_tensor<float>({2, 3, 16, 16}, 4);
  const auto eval = forward(net, x, Mode::eval);
  const auto d = arch.layer_index("drop");
  EXPECT_EQ(eval.outputs[d], eval.outputs[d - 1]);
  const auto a = forward(net, x, Mode::train, 7);
  const auto b = forward(net, x, Mode::train, 7);
  const auto c = forward(net, x, Mode::train, 8);
  EXPECT_EQ(a.logits(), b.logits());
  EXPECT_NE(a.dropout_masks[d], c.dropout_masks[d]);
  for (float m : a.dropout_masks[d].values()) EXPECT_TRUE(m == 0.0f || std::fabs(m - 1 / 0.7f) < 1e-6f);
}

TEST(Network, ShapeMismatchIsRejected) {
  const auto net = init_network<float>(default_arch(2, 16), 1);
  EXPECT_THROW(forward(net, Tensor<float>({1, 3, 8, 8}), Mode::eval), Error);
}

struct LayerCase {
  const char* name;
  const char* body;
  const char* target;
  Mode mode;
};

class LayerGradient : public ::testing::TestWithParam<LayerCase> {};

TEST_P(LayerGradient, MatchesFiniteDifferences) {
  const auto& c = GetParam();
  const auto arch = oracle::tiny_arch(c.body, c.target);
  EXPECT_LT(logit_gradient_error(arch, c.mode, 17), 1e-4) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    EveryKind, LayerGradient,
    ::testing::Values(
        LayerCase{"conv", "layer c conv 4 3 1\nlayer out dense 3\n", "c", Mode::eval},
        LayerCase{"conv_nopad", "layer c conv 2 3 0\nlayer out dense 2\n", "c", Mode::eval},
        LayerCase{"relu", "layer c conv 4 3 1\nlayer r relu\nlayer out dense 3\n", "r", Mode::eval},
        LayerCase{"maxpool", "layer c conv 4 3 1\nlayer p maxpool 2\nlayer out dense 3\n", "c", Mode::eval},
        LayerCase{"globalmaxpool", "layer c conv 4 3 1\nlayer g globalmaxpool\nlayer out dense 3\n", "c",
                  Mode::eval},
        LayerCase{"dense", "layer c conv 2 3 1\nlayer d dense 5\nlayer out dense 3\n", "c", Mode::eval},
        LayerCase{"dropout", "layer c conv 2 3 1\nlayer d dense 6\nlayer x dropout 0.5\nlayer out dense 3\n", "c",
                  Mode::train}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(Network, EndToEndGradientOnDefaultArch) {
  EXPECT_LT(logit_gradient_error(default_arch(3, 8), Mode::train, 23), 1e-4);
}

TEST(Network, ActivationGradientMatchesFullBackward) {
  const auto arch = default_arch(2, 16);
  const auto net = init_network<double>(arch, 2);
  const auto x = oracle::random_tensor<double>({2, 3, 16, 16}, 3);
  const auto r = oracle::random_tensor<double>({2, 2}, 4);
  const auto trace = forward(net, x, Mode::train, 5);
  const auto full = backward(net, trace, r);
  const auto only = activation_gradient(net, trace, r, "relu3");
  const auto& ref = full.activations[arch.layer_index("relu3")];
  ASSERT_EQ(only.shape(), ref.shape());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(only[i], ref[i], 1e-12);
}

TEST(Network, InjectionLeavesUpperLayersUntouched) {
  const auto arch = default_arch(2, 16);
  const auto net = init_network<double>(arch, 2);
  const auto x = oracle::random_tensor<double>({1, 3, 16, 16}, 3);
  const auto trace = forward(net, x, Mode::eval);
  const auto g = oracle::random_tensor<double>(trace.activation(arch, "relu3").shape(), 9);
  const auto grads = inject_backward_at(net, trace, "relu3", g);
  for (std::size_t l = arch.layer_index("relu3") + 1; l < arch.layers.size(); ++l) {
    for (double v : grads.params[l].weight.values()) EXPECT_EQ(v, 0.0);
    for (double v : grads.params[l].bias.values()) EXPECT_EQ(v, 0.0);
  }
  // <A_relu3, g> differentiated numerically.
  auto probe = net;
  const auto numeric = oracle::numeric_gradient(probe, [&](const BasicNetwork<double>& n) {
    return oracle::dot(forward(n, x, Mode::eval).activation(arch, "relu3"), g);
  });
  EXPECT_LT(oracle::rel_error(oracle::flatten(grads), numeric), 1e-4);
}

TEST(Network, CombinedSweepEqualsSumOfParts) {
  const auto arch = default_arch(2, 16);
  const auto net = init_network<double>(arch, 12);
  const auto x = oracle::random_tensor<double>({2, 3, 16, 16}, 13);
  const auto trace = forward(net, x, Mode::train, 3);
  const auto r = oracle::random_tensor<double>({2, 2}, 14);
  const auto g = oracle::random_tensor<double>(trace.activation(arch, "relu3").shape(), 15);
  auto sum = backward(net, trace, r);
  sum.add(inject_backward_at(net, trace, "relu3", g));
  const auto both = oracle::flatten(backward_with_injection(net, trace, r, "relu3", g));
  const auto ref = oracle::flatten(sum);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(both[i], ref[i], 1e-10);
}

TEST(Network, MaxPoolTieGoesToFirstElement) {
  const auto arch = oracle::tiny_arch("layer p maxpool 2\nlayer out dense 1\n", "p", 1, 2);
  const auto net = init_network<double>(arch, 1);
  const auto trace = forward(net, Tensor<double>({1, 1, 2, 2}, 1.0), Mode::eval);
  EXPECT_EQ(trace.argmax[arch.layer_index("p")].at(0), 0u);
}

TEST(Network, ArchTextRoundTrip) {
  const auto arch = default_arch(5, 32, 3);
  EXPECT_EQ(ArchSpec::parse(arch.to_text()), arch);
  EXPECT_THROW(ArchSpec::parse("gfsr-arch 1\ninput 3 8 8\nlayer a bogus\n"), Error);
  EXPECT_THROW(arch.layer_index("nope"), Error);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  oracle::TempDir dir("ckpt");
  const auto net = init_network<float>(default_arch(3, 16), 42);
  save_checkpoint(net, dir / "m.ckpt");
  const auto back = load_checkpoint(dir / "m.ckpt", net.arch);
  EXPECT_EQ(back.arch, net.arch);
  EXPECT_EQ(back.params, net.params);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(net));
}

TEST(Checkpoint, ArchitectureMismatchAndCorruption) {
  oracle::TempDir dir("ckpt2");
  const auto net = init_network<float>(default_arch(3, 16), 42);
  save_checkpoint(net, dir / "m.ckpt");
  try {
    load_checkpoint(dir / "m.ckpt", default_arch(2, 16));
    FAIL() << "expected mismatch";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("architecture mismatch"), std::string::npos);
  }
  auto bytes = encode_checkpoint(net);
  bytes[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(decode_checkpoint(bytes), Error);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 9)), Error);
}
