#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rtfm/errors.hpp"
#include "rtfm/model.hpp"
#include "rtfm/ops.hpp"
#include "test_util.hpp"

namespace rtfm {
namespace {

using ad::Graph;
using ad::Var;
using testing::random_tensor;

ModelConfig small_config(std::size_t T = 8, std::size_t D = 16,
                         AttentionNorm norm = AttentionNorm::none) {
  ModelConfig c;
  c.mtn.T = T;
  c.mtn.D = D;
  c.mtn.attention_norm = norm;
  c.classifier.layer_widths = {12, 6, 1};
  return c;
}

// Xavier weights plus non-zero biases so that every term is exercised.
ModelParams random_params(const ModelConfig& c, std::uint64_t seed) {
  ModelParams p = ModelParams::xavier(c, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto& [name, t] : p.entries()) {
    if (name.ends_with(".bias")) {
      for (auto& v : t.values()) v = u(rng);
    }
  }
  return p;
}

Tensor oracle_tsa(const ModelParams& p, const Tensor& f, AttentionNorm norm) {
  using namespace oracle;
  const Tensor fc = conv1x1(f, p.at("tsa.reduce.weight"), p.at("tsa.reduce.bias"));
  const Tensor c1 = conv1x1(fc, p.at("tsa.c1.weight"), p.at("tsa.c1.bias"));
  const Tensor c2 = conv1x1(fc, p.at("tsa.c2.weight"), p.at("tsa.c2.bias"));
  const Tensor c3 = conv1x1(fc, p.at("tsa.c3.weight"), p.at("tsa.c3.bias"));
  Tensor m = naive_matmul(c1, transpose(c2));
  if (norm == AttentionNorm::scale_by_T) {
    for (auto& v : m.values()) v /= static_cast<double>(f.rows());
  } else if (norm == AttentionNorm::row_softmax) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double mx = -INFINITY, s = 0.0;
      for (std::size_t c = 0; c < m.cols(); ++c) mx = std::max(mx, m(r, c));
      for (std::size_t c = 0; c < m.cols(); ++c) s += std::exp(m(r, c) - mx);
      for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = std::exp(m(r, c) - mx) / s;
    }
  }
  const Tensor c4 = conv1x1(naive_matmul(m, c3), p.at("tsa.c4.weight"), p.at("tsa.c4.bias"));
  return plus(c4, fc);
}

Tensor oracle_pdc(const ModelParams& p, const Tensor& f, std::size_t l, std::size_t dil) {
  const std::string n = "pdc." + std::to_string(l);
  return oracle::add_bias(oracle::naive_conv(f, p.at(n + ".weight"), dil), p.at(n + ".bias"));
}

Tensor oracle_mtn(const ModelParams& p, const Tensor& f) {
  const auto& c = p.config().mtn;
  std::vector<Tensor> parts;
  for (std::size_t l = 0; l < 3; ++l) parts.push_back(oracle_pdc(p, f, l, c.dilation_rates[l]));
  parts.push_back(oracle_tsa(p, f, c.attention_norm));
  Tensor x = f;
  const std::size_t B = c.D / 4;
  for (std::size_t t = 0; t < f.rows(); ++t) {
    for (std::size_t part = 0; part < 4; ++part) {
      for (std::size_t j = 0; j < B; ++j) x(t, part * B + j) += parts[part](t, j);
    }
  }
  return x;
}

std::vector<double> oracle_scores(const ModelParams& p, const Tensor& x) {
  Tensor h = x;
  const std::size_t layers = p.config().classifier.layer_widths.size();
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string n = "fc." + std::to_string(i);
    h = oracle::add_bias(oracle::naive_matmul(h, p.at(n + ".weight")), p.at(n + ".bias"));
    if (i + 1 < layers) {
      for (auto& v : h.values()) v = std::max(v, 0.0);
    }
  }
  std::vector<double> s;
  for (double v : h.values()) s.push_back(1.0 / (1.0 + std::exp(-v)));
  return s;
}

void expect_near(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "entry " << i;
}

// ---- configuration

TEST(ModelConfig, Validation) {
  ModelConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.mtn.D = 18;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config();
  c.mtn.dilation_rates = {1, 0, 4};
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config();
  c.classifier.layer_widths = {8, 2};
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config();
  c.classifier.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(ModelConfig, AttentionNormNames) {
  for (auto n : {AttentionNorm::none, AttentionNorm::scale_by_T, AttentionNorm::row_softmax}) {
    EXPECT_EQ(parse_attention_norm(to_string(n)), n);
  }
  EXPECT_THROW(parse_attention_norm("bogus"), ValidationError);
}

TEST(ModelParams, LayoutShapes) {
  const auto layout = parameter_layout(small_config());
  const auto find = [&](const std::string& n) {
    for (const auto& [name, shape] : layout) {
      if (name == n) return shape;
    }
    return Shape{};
  };
  EXPECT_EQ(find("pdc.0.weight"), (Shape{4, 16, 3}));
  EXPECT_EQ(find("tsa.reduce.weight"), (Shape{4, 16, 1}));
  EXPECT_EQ(find("tsa.c4.weight"), (Shape{4, 4, 1}));
  EXPECT_EQ(find("fc.0.weight"), (Shape{16, 12}));
  EXPECT_EQ(find("fc.2.bias"), (Shape{1}));
}

TEST(ModelParams, XavierBoundsAndZeroBiases) {
  const ModelConfig c = small_config();
  const ModelParams p = ModelParams::xavier(c, 3);
  for (const auto& [name, t] : p.entries()) {
    if (name.ends_with(".bias")) {
      for (double v : t.values()) EXPECT_EQ(v, 0.0);
      continue;
    }
    double fan_in, fan_out;
    if (t.rank() == 3) {
      fan_in = static_cast<double>(t.dim(1) * t.dim(2));
      fan_out = static_cast<double>(t.dim(0) * t.dim(2));
    } else {
      fan_in = static_cast<double>(t.dim(0));
      fan_out = static_cast<double>(t.dim(1));
    }
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (double v : t.values()) EXPECT_LE(std::fabs(v), a) << name;
  }
  EXPECT_EQ(ModelParams::xavier(c, 3), p);
  EXPECT_FALSE(ModelParams::xavier(c, 4) == p);
}

TEST(ModelParams, FromEntriesRejectsBadShapes) {
  const ModelConfig c = small_config();
  ModelParams p = ModelParams::zeros(c);
  auto entries = p.entries();
  EXPECT_NO_THROW(ModelParams::from_entries(c, entries));
  entries[0].second = Tensor({1, 1, 1});
  EXPECT_THROW(ModelParams::from_entries(c, entries), ValidationError);
}

// ---- PDC

TEST(Pdc, ZeroKernelsGiveZero) {
  ModelParams p = ModelParams::zeros(small_config());
  Graph g;
  BoundModel m = bind_const(g, p);
  for (Var b : pdc_forward(g.constant(random_tensor({8, 16}, 1)), m)) {
    EXPECT_EQ(b.value(), Tensor({8, 4}, 0.0));
  }
}

TEST(Pdc, SingleStepUsesOnlyCentreTap) {
  const ModelConfig c = small_config(1, 16);
  ModelParams p = random_params(c, 2);
  Tensor f = random_tensor({1, 16}, 3);
  Graph g;
  auto out = pdc_forward(g.constant(f), bind_const(g, p));
  for (std::size_t l = 0; l < 3; ++l) {
    const Tensor& w = p.at("pdc." + std::to_string(l) + ".weight");
    for (std::size_t o = 0; o < 4; ++o) {
      double s = p.at("pdc." + std::to_string(l) + ".bias")[o];
      for (std::size_t d = 0; d < 16; ++d) s += w[(o * 16 + d) * 3 + 1] * f[d];
      EXPECT_NEAR(out[l].value()[o], s, 1e-12);
    }
  }
}

TEST(Pdc, MatchesDirectConvolution) {
  const ModelConfig c = small_config();
  ModelParams p = random_params(c, 4);
  Tensor f = random_tensor({8, 16}, 5);
  Graph g;
  auto out = pdc_forward(g.constant(f), bind_const(g, p));
  for (std::size_t l = 0; l < 3; ++l) {
    expect_near(out[l].value(), oracle_pdc(p, f, l, c.mtn.dilation_rates[l]), 1e-12);
  }
}

TEST(Pdc, ConstantSignalGivesConstantOutputAwayFromEdges) {
  const ModelConfig c = small_config(16, 16);
  ModelParams p = random_params(c, 6);
  Tensor f({16, 16});
  for (std::size_t t = 0; t < 16; ++t) {
    for (std::size_t d = 0; d < 16; ++d) f(t, d) = 0.1 * static_cast<double>(d);
  }
  Graph g;
  auto out = pdc_forward(g.constant(f), bind_const(g, p));
  for (std::size_t l = 0; l < 3; ++l) {
    const std::size_t pad = c.mtn.dilation_rates[l];
    for (std::size_t t = pad + 1; t + pad < 16; ++t) {
      for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_NEAR(out[l].value()(t, j), out[l].value()(pad, j), 1e-12);
      }
    }
  }
}

TEST(Pdc, WrongShapeThrows) {
  ModelParams p = ModelParams::zeros(small_config());
  Graph g;
  EXPECT_THROW(pdc_forward(g.constant(Tensor({8, 12})), bind_const(g, p)), DimensionError);
  EXPECT_THROW(pdc_forward(g.constant(Tensor({7, 16})), bind_const(g, p)), DimensionError);
}

// ---- TSA

TEST(Tsa, ZeroOutputConvIsolatesSkip) {
  const ModelConfig c = small_config();
  ModelParams p = random_params(c, 7);
  for (auto& v : p.at("tsa.c4.weight").values()) v = 0.0;
  for (auto& v : p.at("tsa.c4.bias").values()) v = 0.0;
  Tensor f = random_tensor({8, 16}, 8);
  Graph g;
  const Tensor out = tsa_forward(g.constant(f), bind_const(g, p)).value();
  const Tensor fc = oracle::conv1x1(f, p.at("tsa.reduce.weight"), p.at("tsa.reduce.bias"));
  EXPECT_EQ(out, fc);
}

TEST(Tsa, SingleStepIsChainOfProducts) {
  const ModelConfig c = small_config(1, 16);
  ModelParams p = random_params(c, 9);
  Tensor f = random_tensor({1, 16}, 10);
  Graph g;
  const Tensor out = tsa_forward(g.constant(f), bind_const(g, p)).value();
  // M is the scalar <c1, c2>; the result is c4(M * c3) + fc.
  const Tensor fc = oracle::conv1x1(f, p.at("tsa.reduce.weight"), p.at("tsa.reduce.bias"));
  const Tensor c1 = oracle::conv1x1(fc, p.at("tsa.c1.weight"), p.at("tsa.c1.bias"));
  const Tensor c2 = oracle::conv1x1(fc, p.at("tsa.c2.weight"), p.at("tsa.c2.bias"));
  Tensor c3 = oracle::conv1x1(fc, p.at("tsa.c3.weight"), p.at("tsa.c3.bias"));
  double m = 0.0;
  for (std::size_t j = 0; j < 4; ++j) m += c1[j] * c2[j];
  for (auto& v : c3.values()) v *= m;
  const Tensor expect =
      oracle::plus(oracle::conv1x1(c3, p.at("tsa.c4.weight"), p.at("tsa.c4.bias")), fc);
  expect_near(out, expect, 1e-12);
}

TEST(Tsa, MatchesOracleForEveryNormalisation) {
  for (auto norm : {AttentionNorm::none, AttentionNorm::scale_by_T, AttentionNorm::row_softmax}) {
    const ModelConfig c = small_config(8, 16, norm);
    ModelParams p = random_params(c, 11);
    Tensor f = random_tensor({8, 16}, 12);
    Graph g;
    expect_near(tsa_forward(g.constant(f), bind_const(g, p)).value(), oracle_tsa(p, f, norm),
                1e-12);
  }
}

// ---- MTN

class MtnShape : public ::testing::TestWithParam<std::pair<std::size_t, std::size_t>> {};

TEST_P(MtnShape, OutputShapeEqualsInput) {
  const auto [T, D] = GetParam();
  const ModelConfig c = small_config(T, D);
  ModelParams p = ModelParams::xavier(c, 13);
  Tensor f = random_tensor({T, D}, 14);
  EXPECT_EQ(mtn_forward(p, f).shape(), f.shape());
}

TEST_P(MtnShape, ZeroWeightsAreIdentity) {
  const auto [T, D] = GetParam();
  ModelParams p = ModelParams::zeros(small_config(T, D));
  Tensor f = random_tensor({T, D}, 15);
  EXPECT_EQ(mtn_forward(p, f), f);
}

INSTANTIATE_TEST_SUITE_P(Sizes, MtnShape,
                         ::testing::Values(std::pair<std::size_t, std::size_t>{8, 16},
                                           std::pair<std::size_t, std::size_t>{32, 64},
                                           std::pair<std::size_t, std::size_t>{1, 4},
                                           std::pair<std::size_t, std::size_t>{5, 12}));

TEST(Mtn, ZeroInputZeroBiasGivesZero) {
  const ModelConfig c = small_config();
  ModelParams p = ModelParams::xavier(c, 16);
  EXPECT_EQ(mtn_forward(p, Tensor({8, 16}, 0.0)), Tensor({8, 16}, 0.0));
}

TEST(Mtn, MatchesBranchOracles) {
  for (auto norm : {AttentionNorm::none, AttentionNorm::row_softmax}) {
    const ModelConfig c = small_config(8, 16, norm);
    ModelParams p = random_params(c, 17);
    Tensor f = random_tensor({8, 16}, 18);
    expect_near(mtn_forward(p, f), oracle_mtn(p, f), 1e-12);
  }
}

TEST(Mtn, GradientCheck) {
  const ModelConfig c = small_config();
  ModelParams p = random_params(c, 19);
  Tensor f = random_tensor({8, 16}, 20);
  auto named = p.named();
  auto program = [&](Graph& g) {
    BoundModel m = bind(g, p);
    return ad::sum(mtn_forward(g.constant_ref(f), m));
  };
  const auto r = ad::grad_check(program, named);
  EXPECT_TRUE(r.passed) << ad::format_report(r);
}

// ---- classifier

TEST(Classifier, ZeroWeightsScoreHalf) {
  ModelParams p = ModelParams::zeros(small_config());
  const Tensor s = classify_snippets(p, random_tensor({8, 16}, 21));
  ASSERT_EQ(s.shape(), (Shape{8}));
  for (double v : s.values()) EXPECT_EQ(v, 0.5);
}

TEST(Classifier, IdenticalRowsIdenticalScores) {
  ModelParams p = random_params(small_config(), 22);
  Tensor row = random_tensor({1, 16}, 23);
  Tensor x({8, 16});
  for (std::size_t t = 0; t < 8; ++t) {
    for (std::size_t d = 0; d < 16; ++d) x(t, d) = row[d];
  }
  const Tensor s = classify_snippets(p, x);
  for (double v : s.values()) EXPECT_EQ(v, s[0]);
}

TEST(Classifier, MatchesComposedOracle) {
  ModelParams p = random_params(small_config(), 24);
  Tensor x = random_tensor({8, 16}, 25, -2, 2);
  const Tensor s = classify_snippets(p, x);
  const auto ref = oracle_scores(p, x);
  for (std::size_t t = 0; t < 8; ++t) EXPECT_NEAR(s[t], ref[t], 1e-12);
}

TEST(Classifier, DropoutReproducibleWithSeedAndOffAtInference) {
  ModelParams p = random_params(small_config(), 26);
  Tensor x = random_tensor({8, 16}, 27);
  auto run = [&](std::uint64_t seed) {
    Graph g;
    std::mt19937_64 rng(seed);
    return classify_snippets(g.constant(x), bind_const(g, p), &rng).value();
  };
  EXPECT_EQ(run(1), run(1));
  EXPECT_FALSE(run(1) == run(2));
  EXPECT_EQ(classify_snippets(p, x), classify_snippets(p, x));
}

TEST(Classifier, GradientCheck) {
  ModelParams p = random_params(small_config(), 28);
  Tensor x = random_tensor({8, 16}, 29);
  auto named = p.named();
  auto program = [&](Graph& g) {
    BoundModel m = bind(g, p);
    return ad::sum(ad::square(classify_snippets(g.constant_ref(x), m, nullptr)));
  };
  const auto r = ad::grad_check(program, named);
  EXPECT_TRUE(r.passed) << ad::format_report(r);
}

}  // namespace
}  // namespace rtfm
