#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spnas/gradcheck.hpp"
#include "spnas/ops.hpp"
#include "test_util.hpp"

using namespace spnas;

namespace {

// Direct summation with symmetric k/2 zero padding; out = ceil(in / stride).
std::vector<double> ref_depthwise(const Tensor& x, const Tensor& w, int stride) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3), k = w.dim(1);
  const std::size_t ho = (h + stride - 1) / stride, wo = (wd + stride - 1) / stride;
  const long pad = static_cast<long>(k / 2);
  std::vector<double> out(n * c * ho * wo, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double acc = 0.0;
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t q = 0; q < k; ++q) {
              const long yi = static_cast<long>(i) * stride + static_cast<long>(a) - pad;
              const long xj = static_cast<long>(j) * stride + static_cast<long>(q) - pad;
              if (yi < 0 || xj < 0 || yi >= static_cast<long>(h) || xj >= static_cast<long>(wd)) continue;
              acc += x[((b * c + ch) * h + yi) * wd + xj] * w[(ch * k + a) * k + q];
            }
          out[((b * c + ch) * ho + i) * wo + j] = acc;
        }
  return out;
}

std::vector<double> ref_conv(const Tensor& x, const Tensor& w, int stride) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::size_t ho = (h + stride - 1) / stride, wo = (wd + stride - 1) / stride;
  const long pad = static_cast<long>(k / 2);
  std::vector<double> out(n * co * ho * wo, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t q = 0; q < k; ++q) {
                const long yi = static_cast<long>(i) * stride + static_cast<long>(a) - pad;
                const long xj = static_cast<long>(j) * stride + static_cast<long>(q) - pad;
                if (yi < 0 || xj < 0 || yi >= static_cast<long>(h) || xj >= static_cast<long>(wd)) continue;
                acc += x[((b * ci + c) * h + yi) * wd + xj] * w[((o * ci + c) * k + a) * k + q];
              }
          out[((b * co + o) * ho + i) * wo + j] = acc;
        }
  return out;
}

}  // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, CopiesShareStorageCloneDoesNot) {
  Tensor a({3}, {1, 2, 3});
  Tensor b = a;
  Tensor c = a.clone();
  a.mutable_data()[0] = 9;
  EXPECT_EQ(b[0], 9);
  EXPECT_EQ(c[0], 1);
  EXPECT_TRUE(a.same_storage(b));
}

TEST(Depthwise, IdentityKernel) {
  std::mt19937_64 rng(1);
  Tensor x = test::random({1, 1, 4, 4}, rng);
  Tensor w({1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
  Tape t;
  Tensor y = ops::conv2d_depthwise(t, x, w, 1);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Depthwise, FullOverlapCenter) {
  Tape t;
  Tensor y = ops::conv2d_depthwise(t, Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 3, 3}, 1.0), 1);
  EXPECT_EQ(y[4], 9.0);
  EXPECT_EQ(y[0], 4.0);
}

TEST(Depthwise, MatchesDirectSummation) {
  std::mt19937_64 rng(2);
  for (int stride : {1, 2}) {
    for (std::size_t k : {3u, 5u}) {
      for (std::size_t hw : {5u, 8u}) {
        Tensor x = test::random({2, 8, hw, hw}, rng);
        Tensor w = test::random({8, k, k}, rng);
        Tape t;
        Tensor y = ops::conv2d_depthwise(t, x, w, stride);
        const auto ref = ref_depthwise(x, w, stride);
        ASSERT_EQ(y.numel(), ref.size());
        EXPECT_EQ(y.dim(2), (hw + stride - 1) / stride);
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
      }
    }
  }
}

TEST(Depthwise, ShapeErrorsNameTheDimension) {
  Tape t;
  try {
    ops::conv2d_depthwise(t, Tensor({1, 2, 4, 4}), Tensor({3, 3, 3}), 1);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ops::conv2d_depthwise(t, Tensor({1, 2, 4, 4}), Tensor({2, 4, 4}), 1), ShapeError);
  EXPECT_THROW(ops::conv2d_depthwise(t, Tensor({1, 2, 4, 4}), Tensor({2, 3, 3}), 3), std::invalid_argument);
}

TEST(Conv2d, MatchesDirectSummation) {
  std::mt19937_64 rng(3);
  for (int stride : {1, 2}) {
    Tensor x = test::random({2, 3, 7, 7}, rng);
    Tensor w = test::random({5, 3, 3, 3}, rng);
    Tape t;
    Tensor y = ops::conv2d(t, x, w, stride);
    const auto ref = ref_conv(x, w, stride);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Pointwise, IdentityAndSum) {
  std::mt19937_64 rng(4);
  Tensor x = test::random({2, 3, 2, 2}, rng);
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tape t;
  Tensor y = ops::conv2d_pointwise(t, x, eye);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);

  Tensor ab = test::random({1, 2, 3, 3}, rng);
  Tensor s = ops::conv2d_pointwise(t, ab, Tensor({1, 2}, {1, 1}));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(s[i], ab[i] + ab[9 + i]);
}

TEST(Pointwise, MatchesDirectLoop) {
  std::mt19937_64 rng(5);
  Tensor x = test::random({3, 6, 5, 4}, rng);
  Tensor w = test::random({7, 6}, rng);
  Tape t;
  Tensor y = ops::conv2d_pointwise(t, x, w);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t o = 0; o < 7; ++o)
      for (std::size_t p = 0; p < 20; ++p) {
        double acc = 0;
        for (std::size_t c = 0; c < 6; ++c) acc += w[o * 6 + c] * x[(b * 6 + c) * 20 + p];
        EXPECT_NEAR(y[(b * 7 + o) * 20 + p], acc, 1e-12);
      }
  EXPECT_THROW(ops::conv2d_pointwise(t, x, Tensor({7, 5})), ShapeError);
}

TEST(Ops, PlumbingValues) {
  Tape t;
  Tensor r = ops::relu6(t, Tensor({3}, {-1, 3, 7}));
  EXPECT_EQ(r[0], 0);
  EXPECT_EQ(r[1], 3);
  EXPECT_EQ(r[2], 6);
  Tensor ce = ops::softmax_cross_entropy(t, Tensor::full({2, 4}, 0.3), std::vector<int>{1, 3});
  EXPECT_NEAR(ce.item(), std::log(4.0), 1e-12);
  EXPECT_THROW(ops::softmax_cross_entropy(t, Tensor::full({1, 4}, 0.0), std::vector<int>{4}), std::exception);
  Tensor g = ops::global_avg_pool(t, Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(g[0], 2.5);
}

TEST(Backward, AnalyticGradients) {
  Tensor w({3}, {1, 2, 3}, true);
  {
    Tape t;
    t.backward(ops::sum_sq(t, w));
    EXPECT_EQ(w.grad()[0], 2);
    EXPECT_EQ(w.grad()[1], 4);
    EXPECT_EQ(w.grad()[2], 6);
  }
  w.zero_grad();
  {
    Tape t;
    t.backward(ops::sum(t, w));
    for (double g : w.grad()) EXPECT_EQ(g, 1.0);
  }
}

TEST(Backward, AccumulatesAndRejectsNonScalar) {
  Tensor w({2}, {1, 2}, true);
  for (int i = 0; i < 2; ++i) {
    Tape t;
    t.backward(ops::sum(t, w));
  }
  EXPECT_EQ(w.grad()[0], 2.0);
  Tape t;
  Tensor y = ops::affine_const(t, w, 2.0, 0.0);
  EXPECT_THROW(t.backward(y), ShapeError);
  Tape empty;
  EXPECT_THROW(empty.backward(Tensor::scalar(1.0)), std::logic_error);
}

TEST(Backward, RepeatableAfterZeroing) {
  std::mt19937_64 rng(6);
  Tensor x = test::random({2, 4, 5, 5}, rng, true);
  Tensor w = test::random({4, 3, 3}, rng, true);
  auto run = [&] {
    x.zero_grad();
    w.zero_grad();
    Tape t;
    t.backward(ops::sum_sq(t, ops::relu6(t, ops::conv2d_depthwise(t, x, w, 2))));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, LinearAndQuadratic) {
  std::mt19937_64 rng(7);
  Tensor w = test::random({5}, rng, true);
  EXPECT_LT(finite_difference_check([&](Tape& t) { return ops::sum(t, ops::affine_const(t, w, 3.0, 1.0)); }, w).max_rel_error, 1e-8);
  EXPECT_LT(finite_difference_check([&](Tape& t) { return ops::sum_sq(t, w); }, w).max_rel_error, 1e-6);
}

TEST(GradCheck, CompositeGraph) {
  std::mt19937_64 rng(8);
  Tensor x = test::random({2, 4, 6, 6}, rng, true);
  Tensor dw = test::random({4, 5, 5}, rng, true);
  Tensor pw = test::random({3, 4}, rng, true);
  Tensor s = test::random({3}, rng, true);
  Tensor b = test::random({3}, rng, true);
  Tensor fw = test::random({2, 3}, rng, true);
  Tensor fb = test::random({2}, rng, true);
  const std::vector<int> labels{0, 1};
  auto f = [&](Tape& t) {
    Tensor h = ops::conv2d_depthwise(t, x, dw, 2);
    h = ops::channel_affine(t, ops::conv2d_pointwise(t, h, pw), s, b);
    return ops::softmax_cross_entropy(t, ops::dense(t, ops::global_avg_pool(t, h), fw, fb), labels);
  };
  for (Tensor* p : {&x, &dw, &pw, &s, &b, &fw, &fb}) EXPECT_LT(finite_difference_check(f, *p).max_rel_error, 1e-4);
}

TEST(GradCheck, DetectsNondeterminism) {
  Tensor w({2}, {1, 2}, true);
  int calls = 0;
  auto f = [&](Tape& t) { return ops::affine_const(t, ops::sum(t, w), 1.0, static_cast<double>(calls++)); };
  EXPECT_THROW(finite_difference_check(f, w), NondeterministicFunction);
}

TEST(Ops, LogFloorClampsGradient) {
  Tensor r = Tensor::scalar(1e-6, true);
  Tensor q = Tensor::scalar(2.0, true);
  Tape t;
  Tensor y = ops::log_floor(t, r, 1e-3);
  EXPECT_DOUBLE_EQ(y.item(), std::log(1e-3));
  t.backward(ops::add(t, y, q));
  EXPECT_EQ(r.has_grad() ? r.grad()[0] : 0.0, 0.0);
  EXPECT_EQ(q.grad()[0], 1.0);
}
