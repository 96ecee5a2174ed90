#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "vitprobe/tensor.hpp"

using namespace vitprobe;

namespace {

Tensor random_tensor(Shape shape, std::mt19937& rng, float lo = -3.0f, float hi = 3.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

Tensor identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
  return t;
}

}  // namespace

TEST(TensorTest, RejectsZeroExtentAndLengthMismatch) {
  EXPECT_THROW(Tensor(Shape{2, 0}), std::invalid_argument);
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.reshaped({3, 2}).at(2, 1), 6.0f);
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(MatmulTest, IdentityReturnsOperand) {
  std::mt19937 rng(1);
  const Tensor b = random_tensor({3, 2}, rng);
  EXPECT_EQ(matmul(identity(3), b), b);
}

TEST(MatmulTest, ZeroAnnihilates) {
  std::mt19937 rng(2);
  const Tensor b = random_tensor({2, 2}, rng);
  EXPECT_EQ(matmul(Tensor({2, 2}), b), Tensor({2, 2}));
}

TEST(MatmulTest, HandComputedProduct) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 2}, {5, 6, 7, 8});
  EXPECT_EQ(matmul(a, b), Tensor({2, 2}, {19, 22, 43, 50}));
}

TEST(MatmulTest, ShapeMismatchCarriesBothShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.lhs(), (Shape{2, 3}));
    EXPECT_EQ(e.rhs(), (Shape{2, 3}));
  }
}

TEST(MatmulTest, IdentityAssociativityIsBitwise) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> ext(1, 12);
    const std::size_t m = ext(rng), k = ext(rng), n = ext(rng);
    const Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    EXPECT_EQ(matmul(matmul(a, identity(k)), b), matmul(a, b));
  }
}

TEST(MatmulTest, LinearMatchesMatmulPlusBias) {
  std::mt19937 rng(4);
  const Tensor a = random_tensor({5, 7}, rng), w = random_tensor({7, 3}, rng), b = random_tensor({3}, rng);
  const Tensor got = linear(a, w, b);
  const Tensor ref = add_bias(matmul(a, w), b);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-5);
}

TEST(SoftmaxTest, UniformOnConstants) {
  const Tensor s = softmax(Tensor({4}, {0, 0, 0, 0}), 0);
  for (float v : s.data()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(SoftmaxTest, SaturatesWithoutOverflow) {
  const Tensor s = softmax(Tensor({2}, {1000, 0}), 0);
  EXPECT_TRUE(s.all_finite());
  EXPECT_NEAR(s[0], 1.0f, 1e-7);
  EXPECT_NEAR(s[1], 0.0f, 1e-7);
}

TEST(SoftmaxTest, ShiftInvariant) {
  std::mt19937 rng(5);
  const Tensor x = random_tensor({3, 9}, rng);
  Tensor shifted = x;
  for (auto& v : shifted.data()) v += 17.25f;
  const Tensor a = softmax(x, 1), b = softmax(shifted, 1);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
}

TEST(SoftmaxTest, NonLastAxis) {
  const Tensor x({2, 2}, {0, 5, 0, 5});
  const Tensor s = softmax(x, 0);
  for (float v : s.data()) EXPECT_FLOAT_EQ(v, 0.5f);
  EXPECT_THROW(softmax(x, 2), std::out_of_range);
}

TEST(SoftmaxTest, PropertySlicesSumToOneAndNonNegative) {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<std::size_t> ext(1, 40);
    const std::size_t rows = ext(rng), cols = ext(rng);
    const Tensor s = softmax(random_tensor({rows, cols}, rng, -50.0f, 50.0f), 1);
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0;
      for (float v : s.row(r)) {
        ASSERT_GE(v, 0.0f);
        sum += v;
      }
      ASSERT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(LayerNormTest, StandardisedRowUnchanged) {
  // zero mean, population variance 1
  const Tensor x({1, 4}, {-1.0f, 1.0f, -1.0f, 1.0f});
  const Tensor y = layer_norm(x, Tensor({4}, 1.0f), Tensor({4}), 1e-12f);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(LayerNormTest, ConstantRowGivesBeta) {
  const Tensor beta({3}, {0.5f, -2.0f, 7.0f});
  const Tensor y = layer_norm(Tensor({2, 3}, 4.0f), Tensor({3}, 3.0f), beta, 1e-6f);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(y.at(r, j), beta[j]);
}

TEST(LayerNormTest, MatchesDirectFormula) {
  // mean 2.5, population variance 1.25
  const Tensor y = layer_norm(Tensor({1, 4}, {1, 2, 3, 4}), Tensor({4}, 1.0f), Tensor({4}), 1e-6f);
  const double denom = std::sqrt(1.25 + 1e-6);
  const double want[] = {-1.5 / denom, -0.5 / denom, 0.5 / denom, 1.5 / denom};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], want[i], 1e-6);
}

TEST(LayerNormTest, AffineParametersApplied) {
  const Tensor y = layer_norm(Tensor({1, 2}, {0, 2}), Tensor({2}, {2, 3}), Tensor({2}, {10, 20}), 1e-6f);
  const double n = 1.0 / std::sqrt(1.0 + 1e-6);
  EXPECT_NEAR(y[0], 10 - 2 * n, 1e-5);
  EXPECT_NEAR(y[1], 20 + 3 * n, 1e-5);
}

TEST(LayerNormTest, RejectsBadArguments) {
  EXPECT_THROW(layer_norm(Tensor({2, 3}), Tensor({2}), Tensor({3})), DimensionError);
  EXPECT_THROW(layer_norm(Tensor({2, 3}), Tensor({3}), Tensor({3}), 0.0f), std::invalid_argument);
}

TEST(GeluTest, KnownPoints) {
  EXPECT_EQ(gelu(0.0f), 0.0f);
  EXPECT_NEAR(gelu(10.0f), 10.0f, 1e-6);
  // -0.5 * Phi(-0.5), Phi(-0.5) = 0.30853753872598688
  EXPECT_NEAR(gelu(-0.5f), -0.15426876936299344, 1e-7);
}

namespace {

long double gelu_oracle(long double x) { return 0.5L * x * std::erfc(-x / std::sqrt(2.0L)); }

}  // namespace

TEST(GeluTest, MatchesErfcOracleOnGrid) {
  double worst = 0;
  for (int i = -5000; i <= 5000; ++i) {
    const double x = i * 1e-3;
    worst = std::max(worst, static_cast<double>(std::fabs(gelu(x) - gelu_oracle(x))));
  }
  EXPECT_LT(worst, 1e-7);
}

// float storage can only promise the nearest float to the exact value
TEST(GeluTest, FloatPathWithinHalfUlp) {
  for (int i = -5000; i <= 5000; ++i) {
    const float x = static_cast<float>(i) * 1e-3f;
    const float got = gelu(x);
    const long double want = gelu_oracle(x);
    const long double ulp = std::nextafter(std::fabs(got), INFINITY) - std::fabs(got);
    ASSERT_LE(std::fabs(got - want), 0.5L * ulp + 1e-12L) << "x=" << x;
  }
  const Tensor t = gelu(Tensor({3}, {-1.0f, 0.0f, 2.0f}));
  EXPECT_EQ(t[0], gelu(-1.0f));
  EXPECT_EQ(t[2], gelu(2.0f));
}

// Exact GELU dips to about -0.17 near x = -0.7518 and is monotone on either
// side of that minimum.
TEST(GeluTest, UnimodalOnGrid) {
  int argmin = -5000;
  for (int i = -5000; i <= 5000; ++i)
    if (gelu(i * 1e-3) < gelu(argmin * 1e-3)) argmin = i;
  EXPECT_EQ(argmin, -752);
  for (int i = -5000; i < argmin; ++i) ASSERT_GE(gelu(i * 1e-3), gelu((i + 1) * 1e-3)) << i;
  for (int i = argmin; i < 5000; ++i) ASSERT_LE(gelu(i * 1e-3), gelu((i + 1) * 1e-3)) << i;
  EXPECT_GE(gelu(5.0f), gelu(-5.0f));
}

TEST(KernelsTest, FiniteInFiniteOut) {
  std::mt19937 rng(7);
  const Tensor x = random_tensor({6, 16}, rng, -100.0f, 100.0f);
  EXPECT_TRUE(softmax(x).all_finite());
  EXPECT_TRUE(gelu(x).all_finite());
  EXPECT_TRUE(layer_norm(x, Tensor({16}, 1.0f), Tensor({16})).all_finite());
  EXPECT_TRUE(matmul(x, transpose(x)).all_finite());
}
