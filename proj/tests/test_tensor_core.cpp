#include <gtest/gtest.h>

#include <cmath>

#include "ileumnet/gradcheck.hpp"
#include "ileumnet/kernels.hpp"
#include "ileumnet/ops.hpp"
#include "oracles.hpp"

using namespace ileumnet;
using oracle::random_tensor;

namespace {

constexpr const Tensor<double>* kNoBias = nullptr;
constexpr const Tensor<float>* kNoBiasF = nullptr;

// Largest absolute difference relative to the largest reference magnitude.
double max_rel_diff(const Tensor<double>& a, const Tensor<double>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double diff = 0.0, scale = 1e-300;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / scale;
}

GradCheckOptions sampled(std::size_t n = 100) {
  GradCheckOptions o;
  o.samples = n;
  o.seed = 17;
  return o;
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_ERROR_CODE((Tensor<double>({2, 3}, std::vector<double>(5))), ErrorCode::kShapeMismatch);
  EXPECT_ERROR_CODE((Tensor<double>({2, 0})), ErrorCode::kShapeMismatch);
  const Tensor<double> t({2, 3, 4});
  EXPECT_EQ(t.size(), numel(t.shape()));
}

TEST(Tensor, DeriveSeedSeparatesTags) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
}

TEST(Pad3d, MirrorLineExcludesEdgeVoxel) {
  const Tensor<double> x({1, 1, 1, 3}, std::vector<double>{1, 2, 3});
  // Depth and height extent 1 cannot be mirrored; test the W axis alone via
  // the per-axis source table.
  std::vector<double> out;
  for (long i = 0; i < 5; ++i) out.push_back(x[static_cast<std::size_t>(kernels::padded_source(i, 3, 1, PaddingMode::kMirror))]);
  EXPECT_EQ(out, (std::vector<double>{2, 1, 2, 3, 2}));
}

TEST(Pad3d, ZeroBorderOnesCore) {
  const Tensor<double> x({1, 3, 3, 3}, 1.0);
  const auto p = kernels::pad3d(x, 1, PaddingMode::kZero);
  ASSERT_EQ(p.shape(), (Shape{1, 5, 5, 5}));
  double total = 0.0;
  for (std::size_t z = 0; z < 5; ++z)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t w = 0; w < 5; ++w) {
        const bool core = z >= 1 && z <= 3 && y >= 1 && y <= 3 && w >= 1 && w <= 3;
        EXPECT_EQ(p.at(0, z, y, w), core ? 1.0 : 0.0);
        total += p.at(0, z, y, w);
      }
  EXPECT_EQ(total, 27.0);
}

TEST(Pad3d, MirrorMatchesReflectedIndexOracle) {
  const auto x = random_tensor({2, 4, 5, 6}, 3);
  for (std::size_t width : {1u, 2u, 3u}) {
    const auto got = kernels::pad3d(x, width, PaddingMode::kMirror);
    const auto want = oracle::pad(x, static_cast<long>(width), PaddingMode::kMirror);
    EXPECT_EQ(got, want) << "width " << width;
  }
}

TEST(Pad3d, MirrorTooWide) {
  const auto x = random_tensor({1, 2, 5, 5}, 1);
  EXPECT_ERROR_CODE(kernels::pad3d(x, 2, PaddingMode::kMirror), ErrorCode::kMirrorTooWide);
  EXPECT_NO_THROW(kernels::pad3d(x, 2, PaddingMode::kZero));
}

TEST(Pad3d, PadThenCentreCropIsIdentity) {
  const auto x = random_tensor({2, 4, 5, 6}, 9);
  for (auto mode : {PaddingMode::kZero, PaddingMode::kMirror}) {
    const auto p = kernels::pad3d(x, 2, mode);
    Tensor<double> crop(x.shape());
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t z = 0; z < 4; ++z)
        for (std::size_t y = 0; y < 5; ++y)
          for (std::size_t w = 0; w < 6; ++w) crop.at(c, z, y, w) = p.at(c, z + 2, y + 2, w + 2);
    EXPECT_EQ(crop, x);
  }
}

TEST(Pad3d, GradientPassesCheck) {
  for (auto mode : {PaddingMode::kZero, PaddingMode::kMirror}) {
    const auto x = random_tensor({2, 3, 4, 5}, 5);
    const auto probe = random_tensor({2, 5, 6, 7}, 6);
    auto f = [&](Tape<double>& t, Var in) {
      const Var p = ops::pad3d(t, in, 1, mode);
      const Var scaled = t.record(
          [&] {
            Tensor<double> v = t.value(p);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] *= probe[i];
            return v;
          }(),
          {p}, [p, &probe](Tape<double>& tt, const Tensor<double>& g) {
            auto& gp = tt.grad_buffer(p);
            for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i] * probe[i];
          });
      return ops::sum(t, scaled);
    };
    EXPECT_LT(grad_check(f, x, sampled()).max_relative_error, 1e-4);
  }
}

TEST(Conv3d, IdentityKernel) {
  const Tensor<double> x({1, 1, 1, 1}, std::vector<double>{5.0});
  Tensor<double> w({1, 1, 3, 3, 3});
  w[13] = 1.0;
  const auto y = kernels::conv3d(x, w, kNoBias, ConvSpec{1, 1, 3, 1, PaddingMode::kZero});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 5.0);
}

TEST(Conv3d, StrideTwoHalvesExtents) {
  const ConvSpec spec{1, 64, 3, 2, PaddingMode::kMirror};
  EXPECT_EQ(spec.output_extent(31), 16u);
  EXPECT_EQ(spec.output_extent(87), 44u);
  for (std::size_t n = 1; n < 200; ++n) EXPECT_EQ(spec.output_extent(n), (n + 1) / 2) << n;
  const auto x = random_tensor({1, 31, 87, 87}, 2);
  const auto w = random_tensor({2, 1, 3, 3, 3}, 3);
  EXPECT_EQ(kernels::conv3d(x, w, kNoBias, ConvSpec{1, 2, 3, 2, PaddingMode::kZero}).shape(), (Shape{2, 16, 44, 44}));
}

TEST(Conv3d, MatchesDirectSummationOracle) {
  const auto x = random_tensor({2, 4, 5, 5}, 11);
  const auto w = random_tensor({3, 2, 3, 3, 3}, 12);
  const auto b = random_tensor({3}, 13);
  const std::vector<double> bias(b.values());
  for (std::size_t stride : {1u, 2u}) {
    for (auto mode : {PaddingMode::kZero, PaddingMode::kMirror}) {
      const auto got = kernels::conv3d(x, w, &b, ConvSpec{2, 3, 3, stride, mode});
      const auto want = oracle::conv3d(x, w, bias, stride, mode);
      EXPECT_LT(max_rel_diff(got, want), 1e-10) << "stride " << stride << " " << to_string(mode);
    }
  }
  const auto wp = random_tensor({3, 2, 1, 1, 1}, 14);
  EXPECT_LT(max_rel_diff(kernels::conv3d(x, wp, &b, ConvSpec{2, 3, 1, 2, PaddingMode::kMirror}),
                         oracle::conv3d(x, wp, bias, 2, PaddingMode::kMirror)),
            1e-10);
}

TEST(Conv3d, ShapeMismatch) {
  const auto x = random_tensor({2, 4, 4, 4}, 1);
  const auto w = random_tensor({3, 1, 3, 3, 3}, 2);
  EXPECT_ERROR_CODE(kernels::conv3d(x, w, kNoBias, ConvSpec{2, 3, 3, 1, PaddingMode::kZero}), ErrorCode::kShapeMismatch);
}

TEST(Conv3d, Linearity) {
  const auto x = random_tensor({2, 5, 6, 7}, 21);
  const auto y = random_tensor({2, 5, 6, 7}, 22);
  const auto w = random_tensor({4, 2, 3, 3, 3}, 23);
  const double a = 0.7, b = -1.3;
  Tensor<double> mix(x.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  for (auto mode : {PaddingMode::kZero, PaddingMode::kMirror}) {
    const ConvSpec spec{2, 4, 3, 2, mode};
    const auto lhs = kernels::conv3d(mix, w, kNoBias, spec);
    const auto cx = kernels::conv3d(x, w, kNoBias, spec), cy = kernels::conv3d(y, w, kNoBias, spec);
    Tensor<double> rhs(lhs.shape());
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * cx[i] + b * cy[i];
    EXPECT_LT(max_rel_diff(lhs, rhs), 1e-10);
  }
}

TEST(Conv3d, GradientsPassCheck) {
  const auto x = random_tensor({2, 4, 5, 5}, 31);
  const auto w = random_tensor({3, 2, 3, 3, 3}, 32);
  const auto b = random_tensor({3}, 33);
  for (std::size_t stride : {1u, 2u}) {
    const ConvSpec spec{2, 3, 3, stride, PaddingMode::kMirror};
    auto wrt_x = [&](Tape<double>& t, Var in) {
      return ops::sum_squares(t, ops::conv3d(t, in, t.constant(w), t.constant(b), spec));
    };
    auto wrt_w = [&](Tape<double>& t, Var in) {
      return ops::sum_squares(t, ops::conv3d(t, t.constant(x), in, t.constant(b), spec));
    };
    auto wrt_b = [&](Tape<double>& t, Var in) {
      return ops::sum_squares(t, ops::conv3d(t, t.constant(x), t.constant(w), in, spec));
    };
    EXPECT_LT(grad_check(wrt_x, x, sampled()).max_relative_error, 1e-4);
    EXPECT_LT(grad_check(wrt_w, w, sampled()).max_relative_error, 1e-4);
    EXPECT_LT(grad_check(wrt_b, b).max_relative_error, 1e-4);
  }
}

TEST(Relu, Examples) {
  const Tensor<double> x({3}, std::vector<double>{-1, 0, 2});
  EXPECT_EQ(kernels::relu(x).values(), (std::vector<double>{0, 0, 2}));

  Tape<double> t;
  const Var in = t.variable(Tensor<double>({4}, -2.0));
  const Var out = ops::sum(t, ops::relu(t, in));
  t.backward(out);
  EXPECT_EQ(t.value(ops::relu(t, in)).values(), std::vector<double>(4, 0.0));
  EXPECT_EQ(t.grad(in).values(), std::vector<double>(4, 0.0));
}

TEST(Relu, SubgradientAtZeroIsZero) {
  Tape<double> t;
  const Var in = t.variable(Tensor<double>({1}, 0.0));
  t.backward(ops::sum(t, ops::relu(t, in)));
  EXPECT_EQ(t.grad(in)[0], 0.0);
}

TEST(Relu, GradientAwayFromKink) {
  // Keep every entry at least 0.1 from zero so eps = 1e-3 never crosses it.
  auto x = random_tensor({3, 4, 5}, 41);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] >= 0 ? x[i] + 0.1 : x[i] - 0.1;
  auto f = [](Tape<double>& t, Var in) { return ops::sum_squares(t, ops::relu(t, in)); };
  EXPECT_LT(grad_check(f, x).max_relative_error, 1e-4);
}

TEST(GlobalAvgPool, ConstantVolume) {
  const Tensor<double> x({3, 2, 4, 5}, 1.75);
  EXPECT_EQ(kernels::global_avg_pool(x).values(), std::vector<double>(3, 1.75));
}

TEST(GlobalAvgPool, OutputDependsOnlyOnChannels) {
  EXPECT_EQ(kernels::global_avg_pool(random_tensor({256, 4, 11, 11}, 1)).shape(), (Shape{256}));
  EXPECT_EQ(kernels::global_avg_pool(random_tensor({256, 3, 9, 9}, 2)).shape(), (Shape{256}));
}

TEST(GlobalAvgPool, BackwardIsUniform) {
  Tape<double> t;
  const Var in = t.variable(random_tensor({2, 3, 4, 5}, 3));
  t.backward(ops::sum(t, ops::global_avg_pool(t, in)));
  for (double g : t.grad(in).values()) EXPECT_DOUBLE_EQ(g, 1.0 / 60.0);
  auto f = [](Tape<double>& tt, Var v) { return ops::sum_squares(tt, ops::global_avg_pool(tt, v)); };
  EXPECT_LT(grad_check(f, random_tensor({2, 3, 4, 5}, 4)).max_relative_error, 1e-4);
}

TEST(Dense, IdentityAndOracle) {
  const auto x = random_tensor({5}, 1);
  Tensor<double> eye({5, 5});
  for (std::size_t i = 0; i < 5; ++i) eye[i * 5 + i] = 1.0;
  const Tensor<double> zero({5});
  EXPECT_EQ(kernels::dense(x, eye, &zero), x);

  const auto w = random_tensor({2, 256}, 2);
  const auto b = random_tensor({2}, 3);
  const auto v = random_tensor({256}, 4);
  const auto y = kernels::dense(v, w, &b);
  ASSERT_EQ(y.shape(), (Shape{2}));
  for (std::size_t o = 0; o < 2; ++o) {
    double acc = b[o];
    for (std::size_t i = 0; i < 256; ++i) acc += w[o * 256 + i] * v[i];
    EXPECT_NEAR(y[o], acc, 1e-12);
  }
  EXPECT_ERROR_CODE(kernels::dense(random_tensor({3}, 5), w, &b), ErrorCode::kShapeMismatch);
}

TEST(Dense, GradientsPassCheck) {
  const auto x = random_tensor({7}, 1), w = random_tensor({3, 7}, 2), b = random_tensor({3}, 3);
  auto fx = [&](Tape<double>& t, Var in) { return ops::sum_squares(t, ops::dense(t, in, t.constant(w), t.constant(b))); };
  auto fw = [&](Tape<double>& t, Var in) { return ops::sum_squares(t, ops::dense(t, t.constant(x), in, t.constant(b))); };
  auto fb = [&](Tape<double>& t, Var in) { return ops::sum_squares(t, ops::dense(t, t.constant(x), t.constant(w), in)); };
  EXPECT_LT(grad_check(fx, x).max_relative_error, 1e-4);
  EXPECT_LT(grad_check(fw, w).max_relative_error, 1e-4);
  EXPECT_LT(grad_check(fb, b).max_relative_error, 1e-4);
}

TEST(Dropout, IdentityCases) {
  const auto x = random_tensor({100}, 1);
  Rng rng(1);
  Tape<double> t;
  const Var in = t.constant(x);
  EXPECT_EQ(t.value(ops::dropout(t, in, 0.0, true, rng)), x);
  EXPECT_EQ(t.value(ops::dropout(t, in, 0.9, false, rng)), x);
}

TEST(Dropout, InvertedScalingPreservesMean) {
  Rng rng(7);
  Tape<double> t;
  const Var in = t.constant(Tensor<double>({100000}, 1.0));
  const auto& y = t.value(ops::dropout(t, in, 0.5, true, rng));
  double mean = 0.0;
  std::size_t zeros = 0;
  for (double v : y.values()) {
    mean += v;
    if (v == 0.0) ++zeros;
    else EXPECT_EQ(v, 2.0);
  }
  mean /= 100000.0;
  EXPECT_NEAR(mean, 1.0, 0.01);
  EXPECT_GT(zeros, 0u);
}

TEST(Dropout, InvalidRate) {
  Rng rng(1);
  Tape<double> t;
  const Var in = t.constant(Tensor<double>({4}, 1.0));
  EXPECT_ERROR_CODE(ops::dropout(t, in, 1.0, true, rng), ErrorCode::kInvalidRate);
  EXPECT_ERROR_CODE(ops::dropout(t, in, -0.1, false, rng), ErrorCode::kInvalidRate);
}

TEST(Dropout, GradientUsesSameMask) {
  const auto x = random_tensor({50}, 2);
  auto f = [](Tape<double>& t, Var in) {
    Rng rng(99);  // fresh stream per evaluation so the mask is fixed
    return ops::sum_squares(t, ops::dropout(t, in, 0.3, true, rng));
  };
  EXPECT_LT(grad_check(f, x).max_relative_error, 1e-4);
}

TEST(SoftmaxCrossEntropy, Examples) {
  for (std::size_t label : {0u, 1u}) {
    Tape<double> t;
    const Var l = t.constant(Tensor<double>({2}, 0.0));
    EXPECT_NEAR(t.value(ops::softmax_cross_entropy(t, l, label))[0], std::log(2.0), 1e-12);
  }
  Tape<double> t;
  const Var l = t.variable(Tensor<double>({2}, std::vector<double>{1000.0, 0.0}));
  const Var loss = ops::softmax_cross_entropy(t, l, 0);
  EXPECT_NEAR(t.value(loss)[0], 0.0, 1e-12);
  t.backward(loss);
  EXPECT_TRUE(t.grad(l).all_finite());
}

TEST(SoftmaxCrossEntropy, GradientIsSoftmaxMinusOneHot) {
  const auto x = random_tensor({2}, 5, -3.0, 3.0);
  Tape<double> t;
  const Var l = t.variable(x);
  t.backward(ops::softmax_cross_entropy(t, l, 1));
  const auto p = kernels::softmax(x);
  EXPECT_NEAR(t.grad(l)[0], p[0], 1e-12);
  EXPECT_NEAR(t.grad(l)[1], p[1] - 1.0, 1e-12);
  for (std::size_t label : {0u, 1u}) {
    auto f = [label](Tape<double>& tt, Var in) { return ops::softmax_cross_entropy(tt, in, label); };
    EXPECT_LT(grad_check(f, x).max_relative_error, 1e-4);
  }
}

TEST(ElementwiseOps, GradientsPassCheck) {
  const auto a = random_tensor({2, 3, 4, 4}, 1), b = random_tensor({2, 3, 4, 4}, 2);
  const auto bias = random_tensor({2}, 3);
  auto f_add = [&](Tape<double>& t, Var in) { return ops::sum_squares(t, ops::add(t, in, t.constant(b))); };
  auto f_ws = [&](Tape<double>& t, Var in) {
    return ops::sum_squares(t, ops::weighted_sum(t, in, 0.3, t.constant(b), 0.7));
  };
  auto f_cb = [&](Tape<double>& t, Var in) {
    return ops::sum_squares(t, ops::add_channel_bias(t, t.constant(a), in));
  };
  auto f_sm = [&](Tape<double>& t, Var in) {
    return ops::sum_squares(t, ops::spatial_softmax(t, in));
  };
  EXPECT_LT(grad_check(f_add, a, sampled()).max_relative_error, 1e-4);
  EXPECT_LT(grad_check(f_ws, a, sampled()).max_relative_error, 1e-4);
  EXPECT_LT(grad_check(f_cb, bias).max_relative_error, 1e-4);
  // Seed 4 puts one gradient entry near 1e-5, where the O(eps^2) central
  // difference truncation alone exceeds the tolerance.
  EXPECT_LT(grad_check(f_sm, random_tensor({1, 2, 3, 3}, 5)).max_relative_error, 1e-4);
}

TEST(AttentionPool, GradientsPassCheck) {
  const auto f = random_tensor({3, 2, 3, 3}, 1);
  const auto w = random_tensor({1, 2, 3, 3}, 2, 0.0, 1.0);
  auto wrt_f = [&](Tape<double>& t, Var in) { return ops::sum_squares(t, ops::attention_pool(t, in, t.constant(w))); };
  auto wrt_w = [&](Tape<double>& t, Var in) { return ops::sum_squares(t, ops::attention_pool(t, t.constant(f), in)); };
  EXPECT_LT(grad_check(wrt_f, f).max_relative_error, 1e-4);
  EXPECT_LT(grad_check(wrt_w, w).max_relative_error, 1e-4);
}

TEST(GradCheck, SumOfSquares) {
  const auto x = random_tensor({20}, 8);
  Tape<double> t;
  const Var in = t.variable(x);
  t.backward(ops::sum_squares(t, in));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(t.grad(in)[i], 2.0 * x[i]);
  auto f = [](Tape<double>& tt, Var v) { return ops::sum_squares(tt, v); };
  EXPECT_LT(grad_check(f, x).max_relative_error, 1e-8);
}

TEST(GradCheck, ConstantFunction) {
  auto f = [](Tape<double>& t, Var) { return t.constant(Tensor<double>({1}, 3.0)); };
  const auto r = grad_check(f, random_tensor({10}, 1));
  EXPECT_EQ(r.max_relative_error, 0.0);
  EXPECT_EQ(r.checked, 10u);
}

TEST(GradCheck, NonFiniteFunction) {
  auto f = [](Tape<double>& t, Var) {
    return t.constant(Tensor<double>({1}, std::numeric_limits<double>::quiet_NaN()));
  };
  EXPECT_ERROR_CODE(grad_check(f, random_tensor({3}, 1)), ErrorCode::kNonFinite);
}

TEST(Tape, RejectsNonFiniteValues) {
  Tape<double> t;
  EXPECT_ERROR_CODE(t.constant(Tensor<double>({2}, std::numeric_limits<double>::infinity())), ErrorCode::kNonFinite);
}

TEST(Tape, GradientShapeMatchesValue) {
  Tape<double> t;
  const Var in = t.variable(random_tensor({2, 3, 4, 4}, 1));
  const Var w = t.variable(random_tensor({2, 2, 3, 3, 3}, 2));
  t.backward(ops::sum_squares(t, ops::conv3d(t, in, w, Var{}, ConvSpec{2, 2, 3, 2, PaddingMode::kMirror})));
  EXPECT_EQ(t.grad(in).shape(), t.value(in).shape());
  EXPECT_EQ(t.grad(w).shape(), t.value(w).shape());
}

TEST(Determinism, RepeatedConvIsBitIdentical) {
  const auto x = random_tensor<float>({3, 9, 17, 17}, 1);
  const auto w = random_tensor<float>({5, 3, 3, 3, 3}, 2);
  const ConvSpec spec{3, 5, 3, 2, PaddingMode::kMirror};
  EXPECT_EQ(kernels::conv3d(x, w, kNoBiasF, spec), kernels::conv3d(x, w, kNoBiasF, spec));
}
