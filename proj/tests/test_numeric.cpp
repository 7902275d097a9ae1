// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "g2s/nn/attention.hpp"
#include "g2s/nn/graph_ops.hpp"
#include "g2s/nn/ops.hpp"
#include "g2s/nn/params.hpp"

using namespace g2s;
using nn::Tensor;
using D = Tensor<double>;

namespace {

constexpr double kOpTolerance = 1e-6;

D random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(r * c);
  for (auto& x : v) x = dist(rng);
  D t(r, c, std::move(v));
  t.set_requires_grad();
  return t;
}

std::vector<nn::Parameter<double>> as_params(std::initializer_list<D> ts) {
  std::vector<nn::Parameter<double>> ps;
  int i = 0;
  for (const auto& t : ts) ps.push_back({"p" + std::to_string(i++), t, true});
  return ps;
}

// Contracts an op output with fixed random weights so every output element
// reaches the loss with a distinct coefficient.
struct Projector {
  std::mt19937_64 rng{99};
  D weights;
  D operator()(const D& out) {
    if (!weights.defined() || weights.rows() != out.rows() || weights.cols() != out.cols()) {
      weights = random_tensor(out.rows(), out.cols(), rng);
      weights.set_requires_grad(false);
    }
    return nn::sum(nn::mul(out, weights));
  }
};

double check(std::function<D()> f, std::initializer_list<D> inputs) {
  auto ps = as_params(inputs);
  return nn::grad_check<double>(f, ps).max_rel_error;
}

}  // namespace

TEST(GradCheck, QuadraticExample) {
  D x(1, 2, std::vector<double>{1.0, 2.0});
  x.set_requires_grad();
  auto f = [&] { return nn::sum(nn::mul(x, x)); };
  f().backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
  auto ps = as_params({x});
  const auto res = nn::grad_check<double>(f, ps);
  EXPECT_LT(res.max_rel_error, 1e-9);
}

TEST(GradCheck, ElementwiseAndLinearOps) {
  std::mt19937_64 rng(1);
  Projector proj;
  auto a = random_tensor(3, 4, rng), b = random_tensor(3, 4, rng), w = random_tensor(4, 5, rng);
  auto bias = random_tensor(1, 5, rng), row = random_tensor(1, 4, rng);
  EXPECT_LT(check([&] { return proj(nn::matmul(a, w)); }, {a, w}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::linear(a, w, bias)); }, {a, w, bias}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::add(a, b)); }, {a, b}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::sub(a, b)); }, {a, b}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::mul(a, b)); }, {a, b}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::scale(a, 0.7)); }, {a}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::add_row(a, row)); }, {a, row}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::sigmoid(a)); }, {a}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::tanh(a)); }, {a}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::gelu(a)); }, {a}), kOpTolerance);
}

TEST(GradCheck, LeakyReluAwayFromKink) {
  std::mt19937_64 rng(2);
  Projector proj;
  auto pos = random_tensor(2, 3, rng, 0.1, 1.0), neg = random_tensor(2, 3, rng, -1.0, -0.1);
  EXPECT_LT(check([&] { return proj(nn::leaky_relu(pos, 0.2)); }, {pos}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::leaky_relu(neg, 0.2)); }, {neg}), kOpTolerance);
}

TEST(GradCheck, ShapeOps) {
  std::mt19937_64 rng(3);
  Projector proj;
  auto a = random_tensor(3, 2, rng), b = random_tensor(3, 4, rng), c = random_tensor(2, 2, rng);
  auto table = random_tensor(5, 3, rng);
  const std::vector<int> ids{4, 0, 4, 2};
  EXPECT_LT(check([&] { return proj(nn::concat_cols<double>({a, b})); }, {a, b}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::concat_rows<double>({a, c})); }, {a, c}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::slice_cols(b, 1, 3)); }, {b}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::slice_rows(b, 1, 3)); }, {b}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::embed(table, ids)); }, {table}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::gather_rows(table, ids)); }, {table}), kOpTolerance);
}

TEST(GradCheck, SoftmaxLayerNormDropout) {
  std::mt19937_64 rng(4);
  Projector proj;
  auto a = random_tensor(3, 5, rng, -2.0, 2.0);
  auto gamma = random_tensor(1, 5, rng), beta = random_tensor(1, 5, rng);
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1, 1, 1, 1, 1, 0, 0, 1, 0, 0};
  EXPECT_LT(check([&] { return proj(nn::softmax(a)); }, {a}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::softmax(a, mask)); }, {a}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::layer_norm(a, gamma, beta)); }, {a, gamma, beta}), kOpTolerance);
  EXPECT_LT(check(
                [&] {
                  std::mt19937_64 r(7);
                  return proj(nn::dropout(a, 0.3, r, true));
                },
                {a}),
            kOpTolerance);
}

TEST(GradCheck, CrossEntropy) {
  std::mt19937_64 rng(5);
  auto logits = random_tensor(4, 6, rng, -2.0, 2.0);
  const std::vector<int> tgt{1, 5, 0, 3};
  const std::vector<std::uint8_t> mask{1, 1, 0, 1};
  EXPECT_LT(check([&] { return nn::cross_entropy_sum(logits, tgt, mask); }, {logits}), kOpTolerance);
  EXPECT_LT(check([&] { return nn::cross_entropy_sum(logits, tgt, mask, 0.1, 0); }, {logits}), kOpTolerance);
  EXPECT_LT(check([&] { return nn::cross_entropy(logits, tgt, mask, 0.2); }, {logits}), kOpTolerance);
}

TEST(GradCheck, GraphAggregations) {
  std::mt19937_64 rng(6);
  Projector proj;
  graph::Csr lists;
  lists.push_list(std::vector<int>{0, 2});
  lists.push_list(std::vector<int>{});
  lists.push_list(std::vector<int>{1});
  lists.push_list(std::vector<int>{0, 1, 3});
  auto values = random_tensor(4, 4, rng), ctx = random_tensor(4, 4, rng), key = random_tensor(4, 4, rng);
  auto attn = random_tensor(1, 4, rng);
  EXPECT_LT(check([&] { return proj(nn::segment_sum(values, lists)); }, {values}), kOpTolerance);
  EXPECT_LT(check([&] { return proj(nn::additive_attention(ctx, key, values, attn, lists, 2, 0.2)); },
                  {ctx, key, values, attn}),
            kOpTolerance);
}

TEST(GradCheck, RelativeMultiHeadAttention) {
  std::mt19937_64 rng(7);
  Projector proj;
  auto q = random_tensor(3, 4, rng), k = random_tensor(4, 4, rng), v = random_tensor(4, 4, rng);
  auto c = random_tensor(1, 4, rng), d = random_tensor(1, 4, rng);
  auto rk = random_tensor(3, 4, rng), rv = random_tensor(3, 4, rng);
  nn::AttentionLayout layout;
  layout.key_begin = {0, 0, 2};
  layout.key_end = {2, 4, 4};
  layout.rel = {0, 1, 2, 1, 0, 2, 1, 0};
  nn::RelativeTerms<double> rel{c, d, rk, rv};
  EXPECT_LT(check([&] { return proj(nn::multihead_attention(q, k, v, layout, 2, 0.5, rel)); }, {q, k, v, c, d, rk, rv}),
            kOpTolerance);
}

TEST(Softmax, SinglePositionIsOne) {
  D a(1, 1, std::vector<double>{3.7});
  EXPECT_DOUBLE_EQ(nn::softmax(a).item(), 1.0);
}

TEST(Softmax, MaskedEntriesGetZeroProbabilityAndGradient) {
  D a(1, 4, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  a.set_requires_grad();
  const std::vector<std::uint8_t> mask{1, 0, 1, 0};
  auto p = nn::softmax(a, mask);
  EXPECT_EQ(p(0, 1), 0.0);
  EXPECT_EQ(p(0, 3), 0.0);
  EXPECT_NEAR(p(0, 0) + p(0, 2), 1.0, 1e-15);
  D w(1, 4, std::vector<double>{0.3, -1.0, 2.0, 5.0});
  nn::sum(nn::mul(p, w)).backward();
  EXPECT_EQ(a.grad()[1], 0.0);
  EXPECT_EQ(a.grad()[3], 0.0);
}

TEST(CrossEntropy, UniformLogitsGiveLogV) {
  const std::size_t V = 7;
  D logits(3, V, 0.25);
  const std::vector<int> tgt{0, 3, 6};
  EXPECT_NEAR(nn::cross_entropy(logits, tgt, {}).item(), std::log(7.0), 1e-12);
}

TEST(CrossEntropy, ConfidentTargetsGiveZero) {
  D logits(2, 3, -1000.0);
  logits(0, 1) = 1000.0;
  logits(1, 2) = 1000.0;
  EXPECT_EQ(nn::cross_entropy(logits, std::vector<int>{1, 2}, {}).item(), 0.0);
}

TEST(Gelu, ExactErfForm) {
  D x(1, 3, std::vector<double>{0.0, 1.0, -2.0});
  const auto y = nn::gelu(x);
  EXPECT_EQ(y(0, 0), 0.0);
  EXPECT_NEAR(y(0, 1), 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0))), 1e-15);
  EXPECT_NEAR(y(0, 2), -1.0 * (1.0 + std::erf(-2.0 / std::sqrt(2.0))), 1e-15);
}

TEST(LayerNorm, NormalizesRows) {
  std::mt19937_64 rng(8);
  auto x = random_tensor(2, 6, rng, -3.0, 3.0);
  D gamma(1, 6, 1.0), beta(1, 6, 0.0);
  const auto y = nn::layer_norm(x, gamma, beta);
  for (std::size_t r = 0; r < 2; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 6; ++c) mean += y(r, c) / 6;
    for (std::size_t c = 0; c < 6; ++c) var += (y(r, c) - mean) * (y(r, c) - mean) / 6;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(Dropout, EvalIsIdentity) {
  std::mt19937_64 rng(9);
  auto x = random_tensor(4, 4, rng);
  const auto y = nn::dropout(x, 0.5, rng, false);
  EXPECT_EQ(y.values(), x.values());
}

TEST(Dropout, InvertedScalingPreservesExpectation) {
  std::mt19937_64 rng(10);
  D x(200, 100, 1.0);
  const auto y = nn::dropout(x, 0.3, rng, true);
  double sum = 0;
  for (double v : y.values()) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.7) < 1e-12);
    sum += v;
  }
  EXPECT_NEAR(sum / static_cast<double>(y.size()), 1.0, 0.02);
}

TEST(Tensor, ShapeMismatchNamesBothShapes) {
  D a(2, 3), b(4, 5);
  try {
    nn::matmul(a, b);
    FAIL() << "expected ShapeMismatch";
  } catch (const nn::ShapeMismatch& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4, 5]"), std::string::npos) << msg;
  }
}

TEST(Tensor, BackwardAccumulates) {
  D x(1, 1, std::vector<double>{3.0});
  x.set_requires_grad();
  nn::sum(nn::mul(x, x)).backward();
  nn::sum(nn::mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Tensor, NoGradGuardRecordsNoHistory) {
  D x(1, 1, std::vector<double>{3.0});
  x.set_requires_grad();
  nn::NoGradGuard ng;
  EXPECT_FALSE(nn::mul(x, x).requires_grad());
}

TEST(ParamStore, DuplicateNamesRejected) {
  nn::ParamStore<float> ps;
  ps.add("w", 2, 2);
  EXPECT_THROW(ps.add("w", 2, 2), std::invalid_argument);
  EXPECT_EQ(ps.element_count(), 4u);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  nn::ParamStore<float> a;
  std::mt19937_64 rng(11);
  auto w = a.add("layer.W", 3, 4);
  auto b = a.add("layer.b", 1, 4);
  nn::init_uniform_fan_in(w, rng);
  nn::init_normal(b, 0.5, rng);
  std::stringstream first;
  nn::write_checkpoint(first, a);

  nn::ParamStore<float> c;
  c.add("layer.W", 3, 4);
  c.add("layer.b", 1, 4);
  std::stringstream in(first.str());
  nn::read_checkpoint(in, c);
  std::stringstream second;
  nn::write_checkpoint(second, c);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(first.str().substr(0, 4), "G2S1");
}

TEST(Checkpoint, RejectsMismatches) {
  nn::ParamStore<float> a;
  a.add("w", 2, 2);
  std::stringstream buf;
  nn::write_checkpoint(buf, a);

  nn::ParamStore<float> renamed;
  renamed.add("v", 2, 2);
  std::stringstream in1(buf.str());
  EXPECT_THROW(nn::read_checkpoint(in1, renamed), nn::CheckpointError);

  nn::ParamStore<float> reshaped;
  reshaped.add("w", 1, 4);
  std::stringstream in2(buf.str());
  EXPECT_THROW(nn::read_checkpoint(in2, reshaped), nn::CheckpointError);

  std::stringstream bad("XXXX");
  EXPECT_THROW(nn::read_checkpoint(bad, a), nn::CheckpointError);

  std::stringstream truncated(buf.str().substr(0, buf.str().size() - 3));
  EXPECT_THROW(nn::read_checkpoint(truncated, a), nn::CheckpointError);
}

TEST(Init, FanInBoundsAndConstants) {
  nn::ParamStore<double> ps;
  auto w = ps.add("w", 16, 8);
  std::mt19937_64 rng(12);
  nn::init_uniform_fan_in(w, rng);
  for (double x : w.values()) EXPECT_LE(std::abs(x), 0.25);
  nn::init_constant(w, 2.0);
  for (double x : w.values()) EXPECT_EQ(x, 2.0);
}
