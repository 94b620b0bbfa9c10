#include <gtest/gtest.h>

#include <cmath>

#include "mapspell/gradcheck.hpp"
#include "mapspell/nn.hpp"
#include "mapspell/optim.hpp"
#include "mapspell/tensor.hpp"

namespace mapspell {
namespace {

constexpr double kGradTol = 1e-4;

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// A fixed random projection to a scalar, so grad checks see non-trivial upstream grads.
Tensor project(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return ops::sum(ops::mul(y, random_tensor(y.shape(), rng, false)));
}

// --- forward examples -------------------------------------------------------

TEST(TensorOps, SoftmaxOfEqualLogitsIsUniform) {
  const Tensor s = ops::softmax(Tensor::from({2}, {0.0, 0.0}));
  EXPECT_DOUBLE_EQ(s.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(s.data()[1], 0.5);
}

TEST(TensorOps, LayerNormOfConstantVectorIsZero) {
  const Tensor x = Tensor::from({4}, {3.0, 3.0, 3.0, 3.0});
  const Tensor y = ops::layer_norm(x, Tensor::from({4}, {1, 1, 1, 1}), Tensor::zeros({4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(TensorOps, MatmulByIdentityIsExact) {
  Rng rng(1);
  const Tensor a = random_tensor({5, 4}, rng, false);
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  EXPECT_EQ(ops::matmul(a, Tensor::from({4, 4}, eye)).data(), a.data());
}

TEST(TensorOps, MatmulShapeMismatchNamesBothShapes) {
  try {
    ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
  }
}

TEST(TensorOps, AddBroadcastsOverLeadingDims) {
  const Tensor y = ops::add(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2}, {10, 20}));
  EXPECT_EQ(y.data(), (std::vector<double>{11, 22, 13, 24}));
}

TEST(TensorOps, DropoutIsIdentityInEvalAndScalesInTrain) {
  Rng rng(2);
  const Tensor x = random_tensor({1000}, rng, false);
  EXPECT_EQ(ops::dropout(x, 0.3, false, {7, 1, 0}).data(), x.data());
  const Tensor y = ops::dropout(x, 0.3, true, {7, 1, 0});
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y.data()[i] == 0.0) ++dropped;
    else EXPECT_NEAR(y.data()[i], x.data()[i] / 0.7, 1e-15);
  }
  EXPECT_GT(dropped, 240u);
  EXPECT_LT(dropped, 360u);
  EXPECT_EQ(ops::dropout(x, 0.3, true, {7, 1, 0}).data(), y.data());
  EXPECT_NE(ops::dropout(x, 0.3, true, {7, 1, 1}).data(), y.data());
}

TEST(TensorOps, ConcatSliceAndMean) {
  const Tensor a = Tensor::from({2, 1}, {1, 2});
  const Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6});
  const Tensor c = ops::concat({a, b});
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  EXPECT_EQ(c.data(), (std::vector<double>{1, 3, 4, 2, 5, 6}));
  EXPECT_EQ(ops::slice(c, 1, 3).data(), b.data());
  EXPECT_DOUBLE_EQ(ops::mean(c).item(), 3.5);
}

TEST(TensorOps, EmbeddingLooksUpRows) {
  const Tensor w = Tensor::from({3, 2}, {0, 1, 10, 11, 20, 21});
  const Tensor e = ops::embedding(w, {2, 0}, {2});
  EXPECT_EQ(e.shape(), (Shape{2, 2}));
  EXPECT_EQ(e.data(), (std::vector<double>{20, 21, 0, 1}));
}

// --- cross entropy ----------------------------------------------------------

TEST(CrossEntropy, MarginTwentyIsNearZero) {
  EXPECT_LT(ops::cross_entropy(Tensor::from({1, 2}, {20.0, 0.0}), {0}).item(), 1e-8);
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  for (std::size_t k : {2u, 5u, 17u})
    EXPECT_NEAR(ops::cross_entropy(Tensor::zeros({1, k}), {0}).item(), std::log(static_cast<double>(k)), 1e-12);
}

TEST(CrossEntropy, IgnoredPositionDoesNotCount) {
  const Tensor two = Tensor::from({2, 3}, {0.3, -1.0, 2.0, 5.0, 1.0, 0.0});
  const Tensor one = Tensor::from({1, 3}, {0.3, -1.0, 2.0});
  EXPECT_DOUBLE_EQ(ops::cross_entropy(two, {2, -1}, -1).item(), ops::cross_entropy(one, {2}).item());
}

TEST(CrossEntropy, AllIgnoredIsAnError) {
  EXPECT_THROW(ops::cross_entropy(Tensor::zeros({2, 3}), {-1, -1}, -1), ContractError);
}

TEST(CrossEntropy, TargetOutOfRangeIsAnError) {
  EXPECT_THROW(ops::cross_entropy(Tensor::zeros({1, 3}), {3}), ContractError);
}

// --- backward semantics -----------------------------------------------------

TEST(Backward, ProductRuleAtThreeFour) {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = Tensor::scalar(4.0, true);
  backward(ops::mul(x, y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(y.grad()[0], 3.0);
}

TEST(Backward, SecondCallAccumulates) {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = Tensor::scalar(4.0, true);
  const Tensor loss = ops::mul(x, y);
  backward(loss);
  backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(Backward, NonScalarLossIsAnError) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(ops::scale(x, 2.0)), ContractError);
}

TEST(Backward, NoGradModeRecordsNothing) {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y;
  {
    NoGradGuard ng;
    y = ops::mul(x, x);
  }
  EXPECT_TRUE(y.is_leaf());
  EXPECT_FALSE(y.requires_grad());
}

// --- Adam -------------------------------------------------------------------

TEST(Adam, FirstStepMovesByLrTimesSign) {
  for (double g : {0.37, -2.5}) {
    Tensor w = Tensor::scalar(1.0, true);
    Adam opt({w}, AdamConfig{0.01});
    opt.zero_grad();
    w.grad()[0] = g;
    opt.step();
    EXPECT_NEAR(w.item() - 1.0, -0.01 * (g > 0 ? 1.0 : -1.0), 1e-9);
    EXPECT_EQ(opt.t(), 1u);
  }
}

TEST(Adam, ZeroGradLeavesParameterButCountsStep) {
  Tensor w = Tensor::scalar(1.5, true);
  Adam opt({w}, AdamConfig{0.1});
  opt.zero_grad();
  opt.step();
  EXPECT_EQ(w.item(), 1.5);
  EXPECT_EQ(opt.t(), 1u);
}

TEST(Adam, MissingGradIsAnError) {
  Tensor w = Tensor::scalar(1.0, true);
  Adam opt({w}, AdamConfig{0.1});
  EXPECT_THROW(opt.step(), ContractError);
}

TEST(Adam, ConvergesOnQuadraticBowl) {
  Tensor w = Tensor::scalar(1.0, true);
  Adam opt({w}, AdamConfig{0.05});
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    backward(ops::mul(w, w));
    opt.step();
  }
  EXPECT_LT(std::abs(w.item()), 1e-2);
}

// --- numerical invariants ---------------------------------------------------

TEST(TensorInvariants, SoftmaxRowsSumToOneAndShiftInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.below(12);
    const Tensor x = random_tensor({3, d}, rng, false, -30.0, 30.0);
    const Tensor s = ops::softmax(x);
    std::vector<double> shifted = x.data();
    for (std::size_t r = 0; r < 3; ++r) {
      const double c = rng.uniform(-50.0, 50.0);
      for (std::size_t j = 0; j < d; ++j) shifted[r * d + j] += c;
    }
    const Tensor s2 = ops::softmax(Tensor::from({3, d}, shifted));
    for (std::size_t r = 0; r < 3; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        sum += s.data()[r * d + j];
        EXPECT_NEAR(s.data()[r * d + j], s2.data()[r * d + j], 1e-12);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      const auto b = s.data().begin() + static_cast<std::ptrdiff_t>(r * d);
      const auto b2 = s2.data().begin() + static_cast<std::ptrdiff_t>(r * d);
      EXPECT_EQ(std::max_element(b, b + d) - b, std::max_element(b2, b2 + d) - b2);
    }
  }
}

TEST(TensorInvariants, LayerNormStandardizes) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 2 + rng.below(64);
    const Tensor x = random_tensor({2, d}, rng, false, -20.0, 20.0);
    const Tensor y = ops::layer_norm(x, Tensor::from({d}, std::vector<double>(d, 1.0)), Tensor::zeros({d}));
    for (std::size_t r = 0; r < 2; ++r) {
      double mu = 0.0, var = 0.0;
      for (std::size_t j = 0; j < d; ++j) mu += y.data()[r * d + j];
      mu /= static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) var += std::pow(y.data()[r * d + j] - mu, 2);
      var /= static_cast<double>(d);
      // Output variance is exactly in_var / (in_var + eps).
      double in_mu = 0.0, in_var = 0.0;
      for (std::size_t j = 0; j < d; ++j) in_mu += x.data()[r * d + j];
      in_mu /= static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) in_var += std::pow(x.data()[r * d + j] - in_mu, 2);
      in_var /= static_cast<double>(d);
      EXPECT_LT(std::abs(mu), 1e-10);
      EXPECT_NEAR(var, in_var / (in_var + 1e-5), 1e-12);
      // Within 1e-6 of 1 needs in_var >= 10 at eps = 1e-5.
      if (in_var >= 10.0) EXPECT_NEAR(var, 1.0, 1e-6);
    }
  }
}

TEST(TensorInvariants, MaskedSoftmaxPutsNoWeightOnPadKeys) {
  Rng rng(5);
  const Tensor x = random_tensor({2, 3, 4}, rng, false);  // heads*batch=2 (batch 1), 3 queries, 4 keys
  const Tensor s = ops::masked_softmax(x, {1, 1, 0, 1}, 1);
  for (std::size_t row = 0; row < 6; ++row) {
    EXPECT_EQ(s.data()[row * 4 + 2], 0.0);
    EXPECT_NEAR(s.data()[row * 4] + s.data()[row * 4 + 1] + s.data()[row * 4 + 3], 1.0, 1e-12);
  }
}

// --- gradient checks per op -------------------------------------------------

struct OpCase {
  const char* name;
  std::function<Tensor(const Tensor&)> f;
};

TEST(GradCheck, UnaryAndShapeOps) {
  const std::vector<OpCase> cases = {
      {"sigmoid", [](const Tensor& x) { return ops::sigmoid(x); }},
      {"tanh", [](const Tensor& x) { return ops::tanh(x); }},
      {"gelu", [](const Tensor& x) { return ops::gelu(x); }},
      {"relu", [](const Tensor& x) { return ops::relu(x); }},
      {"softmax", [](const Tensor& x) { return ops::softmax(x); }},
      {"scale", [](const Tensor& x) { return ops::scale(x, -1.7); }},
      {"reshape", [](const Tensor& x) { return ops::reshape(x, {6, 2}); }},
      {"slice", [](const Tensor& x) { return ops::slice(x, 1, 3); }},
      {"concat", [](const Tensor& x) { return ops::concat({x, ops::tanh(x)}); }},
      {"gather_rows", [](const Tensor& x) { return ops::gather_rows(x, {2, 0, 2}); }},
      {"dropout", [](const Tensor& x) { return ops::dropout(x, 0.4, true, {3, 3, 3}); }},
      {"mean", [](const Tensor& x) { return ops::mean(ops::mul(x, x)); }},
  };
  for (const auto& c : cases) {
    Rng rng(10);
    Tensor x = random_tensor({3, 4}, rng);
    // Keep relu away from its kink.
    for (double& v : x.data())
      if (std::abs(v) < 0.05) v = 0.3;
    const auto r = grad_check([&] { return project(c.f(x)); }, {x});
    EXPECT_LT(r.max_rel_error, kGradTol) << c.name;
  }
}

TEST(GradCheck, BinaryOps) {
  Rng rng(11);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor w = random_tensor({4, 5}, rng);
  Tensor c = random_tensor({2, 3, 4}, rng);
  Tensor d = random_tensor({2, 5, 4}, rng);
  EXPECT_LT(grad_check([&] { return project(ops::add(a, b)); }, {a, b}).max_rel_error, kGradTol);
  EXPECT_LT(grad_check([&] { return project(ops::mul(a, b)); }, {a, b}).max_rel_error, kGradTol);
  EXPECT_LT(grad_check([&] { return project(ops::matmul(a, w)); }, {a, w}).max_rel_error, kGradTol);
  EXPECT_LT(grad_check([&] { return project(ops::bmm(a, d, true)); }, {a, d}).max_rel_error, kGradTol);
  EXPECT_LT(grad_check([&] { return project(ops::where_rows({1, 0, 1, 1, 0, 0}, a, c)); }, {a, c}).max_rel_error, kGradTol);
}

TEST(GradCheck, EmbeddingBlock) {
  Rng rng(12);
  Tensor w = random_tensor({6, 3}, rng);
  const auto r = grad_check([&] { return project(ops::embedding(w, {1, 4, 1, 5}, {2, 2})); }, {w}, {.probes = 18});
  EXPECT_LT(r.max_rel_error, kGradTol);
}

TEST(GradCheck, LayerNormBlock) {
  Rng rng(13);
  Tensor x = random_tensor({3, 6}, rng);
  Tensor g = random_tensor({6}, rng);
  Tensor b = random_tensor({6}, rng);
  const auto r = grad_check([&] { return project(ops::layer_norm(x, g, b)); }, {x, g, b});
  EXPECT_LT(r.max_rel_error, kGradTol);
}

TEST(GradCheck, MaskedSoftmaxAndHeads) {
  Rng rng(14);
  Tensor x = random_tensor({4, 3, 3}, rng);  // 2 heads x batch 2
  EXPECT_LT(grad_check([&] { return project(ops::masked_softmax(x, {1, 1, 0, 1, 0, 1}, 2)); }, {x}).max_rel_error,
            kGradTol);
  Tensor h = random_tensor({2, 3, 4}, rng);
  EXPECT_LT(grad_check([&] { return project(ops::merge_heads(ops::split_heads(h, 2), 2)); }, {h}).max_rel_error, kGradTol);
  EXPECT_LT(grad_check([&] { return project(ops::split_heads(h, 2)); }, {h}).max_rel_error, kGradTol);
}

TEST(GradCheck, CrossEntropyWithIgnore) {
  Rng rng(15);
  Tensor x = random_tensor({4, 5}, rng);
  const auto r = grad_check([&] { return ops::cross_entropy(x, {1, -1, 4, 0}, -1); }, {x});
  EXPECT_LT(r.max_rel_error, kGradTol);
}

TEST(ParamStoreTest, CopyFromChecksNamesAndShapes) {
  Rng rng(16);
  ParamStore a, b, c;
  a.add("encoder.w", {2, 3}, Init::Xavier, rng);
  b.add("encoder.w", {2, 3}, Init::Zeros, rng);
  c.add("encoder.w", {3, 3}, Init::Zeros, rng);
  b.copy_from(a, "encoder.");
  EXPECT_EQ(b.get("encoder.w").data(), a.get("encoder.w").data());
  EXPECT_THROW(c.copy_from(a, "encoder."), ShapeError);
}

}  // namespace
}  // namespace mapspell
