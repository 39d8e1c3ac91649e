#pragma once

// Reference implementations written independently of the library, used to
// derive expected values in the unit and acceptance tests.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <stack>
#include <vector>

#include "ileumnet/errors.hpp"
#include "ileumnet/model.hpp"
#include "ileumnet/tensor.hpp"
#include "ileumnet/volume.hpp"

namespace oracle {

using ileumnet::PaddingMode;
using ileumnet::Tensor;

// Source index for padded position p (padded coordinates), or -1 for a zero.
inline long reflect_index(long p, long n, long width, PaddingMode mode) {
  long j = p - width;
  if (j >= 0 && j < n) return j;
  if (mode == PaddingMode::kZero) return -1;
  if (j < 0) return -j;
  return 2 * (n - 1) - j;
}

inline Tensor<double> pad(const Tensor<double>& x, long width, PaddingMode mode) {
  const long c = static_cast<long>(x.dim(0)), d = static_cast<long>(x.dim(1)), h = static_cast<long>(x.dim(2)),
             w = static_cast<long>(x.dim(3));
  Tensor<double> out({static_cast<std::size_t>(c), static_cast<std::size_t>(d + 2 * width),
                      static_cast<std::size_t>(h + 2 * width), static_cast<std::size_t>(w + 2 * width)});
  for (long ch = 0; ch < c; ++ch)
    for (long z = 0; z < d + 2 * width; ++z)
      for (long y = 0; y < h + 2 * width; ++y)
        for (long xx = 0; xx < w + 2 * width; ++xx) {
          const long sz = reflect_index(z, d, width, mode), sy = reflect_index(y, h, width, mode),
                     sx = reflect_index(xx, w, width, mode);
          out.at(ch, z, y, xx) = (sz < 0 || sy < 0 || sx < 0) ? 0.0 : x.at(ch, sz, sy, sx);
        }
  return out;
}

// Direct summation: for every output voxel and channel, the seven loops over
// (out channel, z, y, x, in channel, kz, ky, kx) collapse to a plain sum.
inline Tensor<double> conv3d(const Tensor<double>& x, const Tensor<double>& w, const std::vector<double>& bias,
                             std::size_t stride, PaddingMode mode) {
  const std::size_t k = w.dim(2);
  const long width = static_cast<long>(k / 2);
  const Tensor<double> p = pad(x, width, mode);
  const std::size_t cout = w.dim(0), cin = w.dim(1);
  std::array<std::size_t, 3> out_ext{};
  for (int a = 0; a < 3; ++a) out_ext[a] = (x.dim(a + 1) + 2 * width - k) / stride + 1;
  Tensor<double> out({cout, out_ext[0], out_ext[1], out_ext[2]});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t z = 0; z < out_ext[0]; ++z)
      for (std::size_t y = 0; y < out_ext[1]; ++y)
        for (std::size_t xx = 0; xx < out_ext[2]; ++xx) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t i = 0; i < cin; ++i)
            for (std::size_t kz = 0; kz < k; ++kz)
              for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx)
                  acc += w[(((o * cin + i) * k + kz) * k + ky) * k + kx] *
                         p.at(i, z * stride + kz, y * stride + ky, xx * stride + kx);
          out.at(o, z, y, xx) = acc;
        }
  return out;
}

// Depth-first flood fill (explicit stack) returning the bounding box.
inline ileumnet::Box3 flood_bbox(const ileumnet::Volume& v, std::array<std::size_t, 3> seed, float threshold) {
  const auto& e = v.extents();
  std::vector<char> seen(e.voxels(), 0);
  std::stack<std::array<long, 3>> todo;
  todo.push({static_cast<long>(seed[0]), static_cast<long>(seed[1]), static_cast<long>(seed[2])});
  std::array<long, 3> lo{1L << 40, 1L << 40, 1L << 40}, hi{-1, -1, -1};
  const std::array<long, 3> n{static_cast<long>(e.d), static_cast<long>(e.h), static_cast<long>(e.w)};
  while (!todo.empty()) {
    const auto p = todo.top();
    todo.pop();
    if (p[0] < 0 || p[1] < 0 || p[2] < 0 || p[0] >= n[0] || p[1] >= n[1] || p[2] >= n[2]) continue;
    const std::size_t idx = static_cast<std::size_t>((p[0] * n[1] + p[1]) * n[2] + p[2]);
    if (seen[idx] || v.data()[idx] < threshold) continue;
    seen[idx] = 1;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
    for (int a = 0; a < 3; ++a)
      for (long s : {-1L, 1L}) {
        auto q = p;
        q[a] += s;
        todo.push(q);
      }
  }
  ileumnet::Box3 b;
  for (std::size_t a = 0; a < 3; ++a) {
    b.lo[a] = static_cast<std::size_t>(lo[a]);
    b.size[a] = static_cast<std::size_t>(hi[a] - lo[a] + 1);
  }
  return b;
}

// Layer-by-layer parameter count of the residual network.
inline std::size_t param_count(const ileumnet::ResNetConfig& c) {
  std::size_t total = 0;
  std::size_t in = c.in_channels;
  for (const auto& s : c.stages) {
    for (std::size_t b = 0; b < s.blocks; ++b) {
      const std::size_t block_in = b == 0 ? in : s.channels;
      total += s.channels * block_in * 27 + s.channels;      // conv1
      total += s.channels * s.channels * 27 + s.channels;    // conv2
      if (b == 0) total += s.channels * block_in + s.channels;  // 1x1x1 projection
    }
    in = s.channels;
  }
  const std::size_t pooled = c.stages.back().channels;
  total += pooled * c.num_classes + c.num_classes;  // main head
  if (c.attention_enabled) {
    const std::size_t gated = c.stages[c.stages.size() - 2].channels;
    total += gated * gated;                           // W_f
    total += gated * pooled;                          // W_g
    total += gated;                                   // gate bias
    total += gated;                                   // psi
    total += gated * c.num_classes + c.num_classes;   // attention head
  }
  return total;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Asymptotic Kolmogorov-Smirnov p-value for statistic d with n samples.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) sum += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(sum, 0.0, 1.0);
}

inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

template <typename T = double>
Tensor<T> random_tensor(ileumnet::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(u(rng));
  return t;
}

}  // namespace oracle

// Asserts that `stmt` throws ileumnet::Error carrying `code`.
#define EXPECT_ERROR_CODE(stmt, code_value)                                   \
  do {                                                                        \
    bool caught_ = false;                                                     \
    try {                                                                     \
      stmt;                                                                   \
    } catch (const ileumnet::Error& e_) {                                     \
      caught_ = true;                                                         \
      EXPECT_EQ(e_.code(), code_value) << e_.what();                          \
    }                                                                         \
    EXPECT_TRUE(caught_) << "expected " << ileumnet::to_string(code_value);   \
  } while (0)
