#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "ssn/numcore.hpp"
#include "test_util.hpp"

namespace ssn {
namespace {

TEST(Nonlinearities, FixedPoints) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(tanh_(0.0), 0.0);
  EXPECT_NEAR(sigmoid(-1.7), 1.0 - sigmoid(1.7), 1e-15);
  EXPECT_GT(sigmoid(-800.0), -1e-300);
  EXPECT_LT(sigmoid(800.0), 1.0 + 1e-15);
  EXPECT_TRUE(std::isfinite(sigmoid(-800.0)));
}

TEST(Softmax, Examples) {
  const Vector u = softmax({0.0, 0.0, 0.0});
  for (double x : u) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);

  const Vector big = softmax({1000.0, 1000.0});
  EXPECT_EQ(big[0], 0.5);
  EXPECT_EQ(big[1], 0.5);

  // exp(0) : exp(ln 3) = 1 : 3
  const Vector q = softmax({0.0, std::log(3.0)});
  EXPECT_NEAR(q[0], 0.25, 1e-15);
  EXPECT_NEAR(q[1], 0.75, 1e-15);

  EXPECT_THROW(softmax(Vector{}), InvalidArgument);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  SeededRng rng(7);
  for (std::size_t n = 1; n <= 64; ++n) {
    const Vector v = testing::random_vector(rng, n, -20.0, 20.0);
    const Vector p = softmax(v);
    double total = 0.0;
    for (double x : p) {
      EXPECT_GT(x, 0.0);
      total += x;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);

    Vector shifted = v;
    for (double& x : shifted) x += 123.25;
    const Vector ps = softmax(shifted);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(ps[i], p[i], 1e-12);
  }
}

TEST(LinearAlgebra, Examples) {
  EXPECT_EQ(dot(Vector{1, 0}, Vector{0, 1}), 0.0);
  EXPECT_EQ(l2_norm(Vector{3, 4}), 5.0);
  EXPECT_EQ(l2_norm(Vector{0, 0, 0}), 0.0);
  EXPECT_GT(l2_norm(Vector{0, 1e-300}), 0.0);

  const Vector x{1.5, -2.0, 0.25};
  EXPECT_EQ(matvec(Matrix::identity(3), x), x);

  EXPECT_THROW(dot(Vector{1, 2}, Vector{1}), DimensionMismatch);
  EXPECT_THROW(matvec(Matrix(2, 3), Vector{1, 2}), DimensionMismatch);
}

TEST(SeededRng, Reproducible) {
  SeededRng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(SeededRng(42).next_u64(), SeededRng(43).next_u64());
  // The 10000th output of a default-seeded mt19937_64 is fixed by the standard.
  std::mt19937_64 ref;
  ref.discard(9999);
  EXPECT_EQ(ref(), 9981545732273789042ULL);
}

TEST(SeededRng, IndexAndUniformRanges) {
  SeededRng rng(3);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const auto k = rng.index(5);
    ASSERT_LT(k, 5u);
    ++hits[k];
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  for (int h : hits) EXPECT_GT(h, 800);
  EXPECT_THROW(rng.index(0), InvalidArgument);
}

TEST(SeededRng, StateRoundTrip) {
  SeededRng a(9);
  for (int i = 0; i < 17; ++i) a.next_u64();
  SeededRng b;
  b.restore(a.state());
  EXPECT_EQ(b.seed(), 9u);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(GradCheck, LinearFunctionIsExact) {
  SeededRng rng(1);
  Param w("w", 5, 1);
  testing::randomize(w, rng);
  const Vector x = testing::random_vector(rng, 5);
  Param* params[] = {&w};
  auto loss = [&](bool with_grad) {
    if (with_grad) {
      for (std::size_t i = 0; i < 5; ++i) w.grad(i, 0) += x[i];
    }
    return dot(w.value.span(), x.span());
  };
  EXPECT_LT(finite_diff_grad_check(loss, params), 1e-9);
}

TEST(GradCheck, ConstantLossHasZeroError) {
  Param w("w", 3, 2);
  Param* params[] = {&w};
  const double err = finite_diff_grad_check([](bool) { return 2.5; }, params);
  EXPECT_EQ(err, 0.0);
  for (double g : w.grad.span()) EXPECT_EQ(g, 0.0);
}

TEST(GradCheck, DetectsWrongGradient) {
  Param w("w", 2, 1);
  w.value(0, 0) = 1.0;
  w.value(1, 0) = 2.0;
  Param* params[] = {&w};
  auto loss = [&](bool with_grad) {
    if (with_grad) {
      w.grad(0, 0) += 2.0 * w.value(0, 0);
      w.grad(1, 0) += 3.0 * w.value(1, 0);  // should be 2x
    }
    return w.value(0, 0) * w.value(0, 0) + w.value(1, 0) * w.value(1, 0);
  };
  EXPECT_GT(finite_diff_grad_check(loss, params), 0.1);
}

TEST(GradCheck, RejectsNonFiniteLoss) {
  Param w("w", 1, 1);
  Param* params[] = {&w};
  EXPECT_THROW(finite_diff_grad_check([](bool) { return std::nan(""); }, params), NumericError);
  EXPECT_THROW(finite_diff_grad_check([](bool) { return 0.0; }, params, 0.0), InvalidArgument);
}

TEST(GradCheck, SmoothNonlinearities) {
  // softmax-weighted tanh/sigmoid composite with hand-derived gradient.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SeededRng rng(seed);
    Param w("w", 4, 1);
    testing::randomize(w, rng, 1.0);
    Param* params[] = {&w};
    auto loss = [&](bool with_grad) {
      Vector v(4);
      for (std::size_t i = 0; i < 4; ++i) v[i] = std::tanh(w.value(i, 0));
      const Vector p = softmax(v);
      double l = 0.0;
      for (std::size_t i = 0; i < 4; ++i) l += p[i] * sigmoid(w.value(i, 0));
      if (with_grad) {
        Vector s(4);
        for (std::size_t i = 0; i < 4; ++i) s[i] = sigmoid(w.value(i, 0));
        for (std::size_t i = 0; i < 4; ++i) {
          const double dv = p[i] * (s[i] - l);  // d l / d v_i
          w.grad(i, 0) += dv * (1.0 - v[i] * v[i]) + p[i] * s[i] * (1.0 - s[i]);
        }
      }
      return l;
    };
    EXPECT_LT(finite_diff_grad_check(loss, params), 1e-6) << "seed " << seed;
  }
}

TEST(Param, ZeroGradResets) {
  Param p("p", 2, 2);
  for (double& g : p.grad.span()) g = 3.0;
  p.zero_grad();
  for (double g : p.grad.span()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(p.grad.rows(), p.value.rows());
  EXPECT_EQ(p.grad.cols(), p.value.cols());
}

}  // namespace
}  // namespace ssn
