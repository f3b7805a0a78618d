#include <gtest/gtest.h>

#include <random>

#include "duin/tensor.hpp"
#include "gradcheck.hpp"

using namespace duin;
using duin::testing::grad_check;
using duin::testing::random_tensor;

namespace {

double sum_of(const Tensor<double>& t) {
  double s = 0;
  for (double v : t.data()) s += v;
  return s;
}

}  // namespace

TEST(Tensor, RejectsMismatchedShape) {
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), DimensionError);
  EXPECT_THROW(Tensor<float>({0, 3}, {}), DimensionError);
}

TEST(Tensor, BroadcastAddMatchesLoop) {
  auto a = Tensor<double>::of({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor<double>::of({3}, {10, 20, 30});
  auto c = add(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 3}));
  const std::vector<double> want{11, 22, 33, 14, 25, 36};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(c[i], want[i]);
}

TEST(Tensor, BroadcastMismatchNamesShapes) {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({4});
  try {
    add(a, b);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4]"), std::string::npos);
  }
}

TEST(Tensor, BlockedMatmulEqualsNaiveBitForBit) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> d(-1, 1);
  for (auto [m, k, n] : {std::tuple{3, 5, 7}, {17, 130, 9}, {64, 64, 64}, {1, 200, 1}}) {
    std::vector<float> a(m * k), b(k * n);
    for (auto& x : a) x = d(rng);
    for (auto& x : b) x = d(rng);
    Tensor<float> A({std::size_t(m), std::size_t(k)}, a), B({std::size_t(k), std::size_t(n)}, b);
    auto fast = matmul(A, B);
    auto slow = matmul(A, B, MatmulKernel::kNaive);
    for (std::size_t i = 0; i < fast.size(); ++i) ASSERT_EQ(fast[i], slow[i]);
  }
}

TEST(Tensor, MatmulShapeError) {
  EXPECT_THROW(matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 3})), DimensionError);
}

TEST(Tensor, SigmoidStaysInsideOpenInterval) {
  auto s = sigmoid(Tensor<float>::of({4}, {-200.f, -30.f, 30.f, 200.f}));
  for (float v : s.data()) {
    EXPECT_GT(v, 0.f);
    EXPECT_LT(v, 1.f);
  }
  EXPECT_NEAR(stable_sigmoid(0.0), 0.5, 1e-15);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  std::mt19937 rng(1);
  auto x = random_tensor({3, 4, 5}, rng, 3.0, false);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto p = softmax(x, axis);
    auto s = sum(p, axis);
    for (double v : s.data()) EXPECT_NEAR(v, 1.0, 1e-12);
  }
}

TEST(Tensor, LogSoftmaxHandlesLargeLogits) {
  auto x = Tensor<double>::of({1, 3}, {1000, 1001, 1002});
  auto l = log_softmax(x, 1);
  EXPECT_NEAR(l[2], -std::log(1 + std::exp(-1.0) + std::exp(-2.0)), 1e-12);
}

TEST(Tensor, BceWithLogitsMatchesDirectFormula) {
  auto z = Tensor<double>::of({3}, {2.0, -1.0, 0.3});
  std::vector<float> y{1, 0, 1};
  double want = 0;
  for (int i = 0; i < 3; ++i) {
    const double p = 1 / (1 + std::exp(-z[i]));
    want -= y[i] * std::log(p) + (1 - y[i]) * std::log(1 - p);
  }
  EXPECT_NEAR(bce_with_logits(z, y).item(), want / 3, 1e-12);
}

TEST(Tensor, BceFiniteAtExtremeLogits) {
  auto z = Tensor<float>::of({2}, {-500.f, 500.f});
  std::vector<float> y{1, 0};
  const float l = bce_with_logits(z, y).item();
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, 500.f, 1e-3);
}

TEST(Tensor, ConcatSliceRoundTrip) {
  std::mt19937 rng(2);
  auto a = random_tensor({2, 3, 4}, rng, 1, false);
  auto b = random_tensor({2, 2, 4}, rng, 1, false);
  auto c = concat<double>({a, b}, 1);
  ASSERT_EQ(c.shape(), (Shape{2, 5, 4}));
  auto back = slice(c, 1, 3, 5);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(back[i], b[i]);
}

TEST(Tensor, GatherPaddingRowReadsZeroAndGetsNoGrad) {
  auto table = Tensor<double>::of({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  std::vector<std::uint32_t> ids{0, 2, 0};
  Tape<double> tape;
  auto g = gather_rows(table, ids, std::uint32_t{0});
  EXPECT_EQ(sum_of(g), 11.0);
  tape.backward(sum(g));
  EXPECT_EQ(table.grad()[0], 0.0);
  EXPECT_EQ(table.grad()[4], 1.0);
  EXPECT_THROW(gather_rows(table, std::vector<std::uint32_t>{3}), IndexError);
}

TEST(Tensor, BackwardRequiresScalar) {
  auto x = Tensor<double>::ones({2}, true);
  Tape<double> tape;
  auto y = scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Tensor, NoTapeMeansNoHistory) {
  auto x = Tensor<double>::ones({2}, true);
  auto y = scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(TensorGrad, ElementwiseAndBroadcast) {
  std::mt19937 rng(5);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4}, rng);
  auto c = random_tensor({3, 1}, rng);
  auto f = [&] {
    auto t = mul(add(a, b), sigmoid(sub(a, c)));
    t = div(t, add_scalar(exp(scale(c, 0.1)), 1.0));
    return sum(mul(softplus(t), one_minus(sigmoid(b))));
  };
  EXPECT_LT(grad_check(f, {a, b, c}).max_rel_error, 1e-6);
}

TEST(TensorGrad, MatmulTransposeReshape) {
  std::mt19937 rng(6);
  auto a = random_tensor({5, 7}, rng);
  auto b = random_tensor({7, 3}, rng);
  auto f = [&] {
    auto m = matmul(a, b);
    auto t = reshape(transpose(m), {1, 15});
    return sum(mul(t, t));
  };
  EXPECT_LT(grad_check(f, {a, b}).max_rel_error, 1e-6);
}

TEST(TensorGrad, ConcatSliceGatherReductions) {
  std::mt19937 rng(7);
  auto a = random_tensor({2, 3, 4}, rng);
  auto table = random_tensor({6, 4}, rng);
  std::vector<std::uint32_t> ids{1, 5, 1, 0, 2, 3};
  auto f = [&] {
    auto g = reshape(gather_rows(table, ids, std::uint32_t{0}), {2, 3, 4});
    auto c = concat<double>({a, g}, 2);
    auto s = slice(c, 2, 2, 7);
    auto m = mean(s, 1);
    return add(sum(mul(m, m)), mean(sqrt(add_scalar(mul(s, s), 1.0))));
  };
  EXPECT_LT(grad_check(f, {a, table}).max_rel_error, 1e-6);
}

TEST(TensorGrad, SoftmaxLogSoftmaxBce) {
  std::mt19937 rng(8);
  auto x = random_tensor({3, 5}, rng, 2.0);
  std::vector<float> y{1, 0, 1, 1, 0};
  auto f = [&] {
    auto p = softmax(x, 1);
    auto lp = log_softmax(x, 0);
    auto z = sum(add(mul(p, x), lp), 0);
    return add(bce_with_logits(z, y), mean(log(add_scalar(relu(x), 1.0))));
  };
  EXPECT_LT(grad_check(f, {x}).max_rel_error, 1e-5);
}
