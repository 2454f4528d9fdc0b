#include <gtest/gtest.h>

#include "biofm/encoder.hpp"
#include "biofm/objective.hpp"
#include "biofm/ops.hpp"
#include "gradient_suite.hpp"

using namespace biofm;

namespace {

template <typename T>
Var<T> random_input(std::size_t B, std::size_t C, std::size_t L, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> t({B, C, L});
  for (auto& v : t.storage()) v = static_cast<T>(normal(rng));
  return make_var(std::move(t));
}

}  // namespace

TEST(Encoder, PaperPresetShapes) {
  const auto cfg = EncoderConfig::paper(4);
  EXPECT_EQ(cfg.blocks.size(), 16u);
  Network<float> net(cfg, HeadConfig{}, true, 1);
  for (std::size_t L : {512u, 700u}) {
    Graph<float> g(false);
    auto h = net.forward_embed(g, random_input<float>(2, 4, L, 2), Mode::Train);
    EXPECT_EQ(h->value.shape(), (Shape{2, 256}));
    auto z = net.forward_project(g, h, Mode::Train);
    EXPECT_EQ(z->value.shape(), (Shape{2, 128}));
    auto p = net.forward_predict(g, z, Mode::Train);
    EXPECT_EQ(p->value.shape(), (Shape{2, 128}));
  }
  // Informational: reported by ctest -V.
  std::cout << "paper preset parameters (4-channel encoder): " << count_params(cfg) << "\n";
}

TEST(Encoder, CountParamsMatchesRegisteredLeaves) {
  for (const auto& cfg : {EncoderConfig::paper(4), EncoderConfig::desk(1), oracle::tiny_encoder_config()}) {
    HeadConfig head{32, 16, true};
    Network<float> net(cfg, head, true, 3);
    // The predictor maps projections to projections.
    EXPECT_EQ(net.params().count(), count_params(cfg) + count_params(head, cfg.embedding_dim) +
                                        count_params(head, head.output_dim));
  }
}

TEST(Encoder, CountParamsArithmetic) {
  // fc1 10->10 with bias is 110, fc2 10->5 with bias is 55.
  EXPECT_EQ(count_params(HeadConfig{10, 5, false}, 10), 110u + 55u);
  auto expand_weights = [](int width) {
    EncoderConfig c = oracle::tiny_encoder_config();
    c.stem_width = width;
    c.blocks = {{4, 3, 1, width, 0.25}};
    Network<float> net(c, HeadConfig{8, 4, true}, false, 1);
    for (const auto& p : net.params().params())
      if (p.name.find("blocks.0.expand.conv.weight") != std::string::npos) return p.var->value.size();
    return std::size_t{0};
  };
  EXPECT_EQ(expand_weights(16), 4 * expand_weights(8));
}

TEST(Encoder, ValidationRejectsUnderflowAndBadSpecs) {
  auto cfg = EncoderConfig::paper(4);
  EXPECT_THROW(cfg.validate(16), ValidationError);
  EXPECT_NO_THROW(cfg.validate(512));
  EXPECT_NO_THROW(cfg.validate(65));
  EXPECT_THROW(cfg.validate(64), ValidationError);
  auto bad = EncoderConfig::desk(4);
  bad.blocks[0].kernel_size = 4;
  EXPECT_THROW(bad.validate(512), ValidationError);
  bad = EncoderConfig::desk(4);
  bad.blocks[0].stride = 3;
  EXPECT_THROW(bad.validate(512), ValidationError);
  bad = EncoderConfig::desk(4);
  bad.embedding_dim = 0;
  EXPECT_THROW(bad.validate(512), ValidationError);
}

TEST(Encoder, ResidualIffStrideOneAndSameWidth) {
  Network<float> net(EncoderConfig::desk(4), HeadConfig{}, false, 4);
  const auto& blocks = net.encoder().blocks();
  const auto& specs = EncoderConfig::desk(4).blocks;
  int in = EncoderConfig::desk(4).stem_width;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    EXPECT_EQ(blocks[i].has_residual(), specs[i].stride == 1 && specs[i].out_width == in);
    in = specs[i].out_width;
  }
}

TEST(Encoder, SeGateLimit) {
  Network<double> net(oracle::tiny_encoder_config(), oracle::tiny_head_config(), false, 5);
  auto x = random_input<double>(3, 2, 64, 6);
  auto embed = [&] {
    Graph<double> g(false);
    return net.forward_embed(g, x, Mode::Eval)->value;
  };
  const auto gated = embed();
  auto& block = net.encoder().blocks()[0];
  block.set_gate_bypass(true);
  const auto bypassed = embed();
  EXPECT_NE(gated, bypassed);
  block.set_gate_bypass(false);
  // A huge gate bias saturates the sigmoid at exactly 1.
  for (auto& v : block.se_expand().bias->value.storage()) v = 1e3;
  EXPECT_EQ(embed(), bypassed);
}

TEST(Encoder, EvalModeDeterministicAndDiffersFromTrain) {
  Network<float> net(EncoderConfig::desk(4), HeadConfig{64, 32, true}, false, 7);
  auto x = random_input<float>(4, 4, 512, 8);
  Graph<float> g(false);
  auto e1 = net.forward_project(g, net.forward_embed(g, x, Mode::Eval), Mode::Eval);
  auto e2 = net.forward_project(g, net.forward_embed(g, x, Mode::Eval), Mode::Eval);
  EXPECT_EQ(e1->value, e2->value);
  auto t = net.forward_embed(g, x, Mode::Train);
  EXPECT_NE(t->value, net.forward_embed(g, x, Mode::Eval)->value);
}

TEST(Encoder, EveryParameterReceivesGradient) {
  Network<double> net(oracle::tiny_encoder_config(), oracle::tiny_head_config(), true, 9);
  auto x1 = random_input<double>(4, 2, 64, 10), x2 = random_input<double>(4, 2, 64, 11);
  Graph<double> g;
  auto z1 = net.forward_project(g, net.forward_embed(g, x1, Mode::Train), Mode::Train);
  auto z2 = net.forward_project(g, net.forward_embed(g, x2, Mode::Train), Mode::Train);
  auto p1 = net.forward_predict(g, z1, Mode::Train);
  auto l = ops::add(g, loss::infonce(g, z1, z2, 0.1), loss::byol(g, p1, detach(z2)));
  g.backward(l);
  for (const auto& p : net.params().params()) {
    ASSERT_FALSE(p.var->grad.empty()) << p.name;
    double mag = 0;
    for (double v : p.var->grad.storage()) mag += std::abs(v);
    EXPECT_GT(mag, 0.0) << p.name;
  }
}

TEST(Encoder, PredictorOnlyWhenRequested) {
  Network<float> plain(EncoderConfig::desk(4), HeadConfig{}, false, 12);
  EXPECT_FALSE(plain.has_predictor());
  for (const auto& p : plain.params().params()) EXPECT_EQ(p.name.find("predictor"), std::string::npos);
  Graph<float> g(false);
  EXPECT_THROW(plain.forward_predict(g, make_var(Tensor<float>({2, 128})), Mode::Eval), Error);
}

TEST(Encoder, SameSeedSameWeights) {
  Network<float> a(EncoderConfig::desk(4), HeadConfig{}, false, 13), b(EncoderConfig::desk(4), HeadConfig{}, false, 13);
  for (std::size_t i = 0; i < a.params().params().size(); ++i)
    EXPECT_EQ(a.params().params()[i].var->value, b.params().params()[i].var->value);
}

TEST(Encoder, CompositeGradients) {
  for (const auto& c : oracle::composite_gradient_cases()) {
    EXPECT_TRUE(c.report.ok()) << c.name << ": " << c.report.failed << "/" << c.report.checked << " "
                               << c.report.worst_where;
  }
}
