#include "ileumnet/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstring>
#include <limits>

namespace ileumnet {

std::string_view to_string(PaddingMode mode) noexcept {
  return mode == PaddingMode::kMirror ? "mirror" : "zero";
}

PaddingMode parse_padding_mode(std::string_view text) {
  if (text == "mirror") return PaddingMode::kMirror;
  if (text == "zero") return PaddingMode::kZero;
  fail(ErrorCode::kConfig, "unknown padding mode '" + std::string(text) + "'");
}

void ConvSpec::validate() const {
  require(in_channels > 0 && out_channels > 0, ErrorCode::kShapeMismatch, "channel counts must be positive");
  require(kernel == 1 || kernel == 3, ErrorCode::kShapeMismatch, "kernel must be 1 or 3");
  require(stride == 1 || stride == 2, ErrorCode::kShapeMismatch, "stride must be 1 or 2");
}

namespace kernels {
namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMajor<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMajor<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// Target im2col block size in elements. Blocks that stay cache-resident run
// the GEMM roughly twice as fast as whole-volume blocks.
// The weight-gradient GEMM contracts over columns and prefers longer blocks.
constexpr std::size_t kForwardBlockElements = std::size_t{1} << 19;
constexpr std::size_t kBackwardBlockElements = std::size_t{1} << 22;

void check_rank4(const Shape& s, const char* what) {
  require(s.size() == 4, ErrorCode::kShapeMismatch, std::string(what) + " must be [C,D,H,W], got " + to_string(s));
}

struct ConvGeometry {
  std::size_t cin, d, h, w;     // input
  std::size_t dp, hp, wp;       // padded input
  std::size_t cout, dout, hout, wout;
  std::size_t k, stride, pad;
  std::size_t rows() const { return cin * k * k * k; }
  std::size_t lines() const { return dout * hout; }
  std::size_t columns() const { return dout * hout * wout; }
};

ConvGeometry geometry(const Shape& xs, const Shape& ws, const ConvSpec& spec) {
  spec.validate();
  check_rank4(xs, "conv3d input");
  require(ws == spec.weight_shape(), ErrorCode::kShapeMismatch,
          "conv3d weight " + to_string(ws) + " does not match spec " + to_string(spec.weight_shape()));
  require(xs[0] == spec.in_channels, ErrorCode::kShapeMismatch,
          "conv3d input channels " + std::to_string(xs[0]) + " != " + std::to_string(spec.in_channels));
  ConvGeometry g{};
  g.cin = xs[0];
  g.d = xs[1];
  g.h = xs[2];
  g.w = xs[3];
  g.pad = spec.pad_width();
  g.k = spec.kernel;
  g.stride = spec.stride;
  g.dp = g.d + 2 * g.pad;
  g.hp = g.h + 2 * g.pad;
  g.wp = g.w + 2 * g.pad;
  g.cout = spec.out_channels;
  g.dout = spec.output_extent(g.d);
  g.hout = spec.output_extent(g.h);
  g.wout = spec.output_extent(g.w);
  return g;
}

// Output lines (one (z, y) row of wout voxels) per im2col block.
std::size_t lines_per_block(const ConvGeometry& g, std::size_t target_elements) {
  const std::size_t per_line = g.rows() * g.wout;
  return std::clamp<std::size_t>(target_elements / std::max<std::size_t>(per_line, 1), 1, g.lines());
}

// cols[r][n] for output lines [l0, l0 + nl).
template <typename T>
void im2col(const T* padded, const ConvGeometry& g, std::size_t l0, std::size_t nl, T* cols) {
  const std::size_t n_cols = nl * g.wout;
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t kz = 0; kz < g.k; ++kz) {
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx, ++r) {
          T* dst = cols + r * n_cols;
          for (std::size_t l = l0; l < l0 + nl; ++l) {
            const std::size_t iz = (l / g.hout) * g.stride + kz;
            const std::size_t iy = (l % g.hout) * g.stride + ky;
            const T* src = padded + ((c * g.dp + iz) * g.hp + iy) * g.wp + kx;
            if (g.stride == 1) {
              std::memcpy(dst, src, g.wout * sizeof(T));
            } else {
              for (std::size_t ox = 0; ox < g.wout; ++ox) dst[ox] = src[ox * g.stride];
            }
            dst += g.wout;
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, std::size_t l0, std::size_t nl, T* padded) {
  const std::size_t n_cols = nl * g.wout;
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t kz = 0; kz < g.k; ++kz) {
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx, ++r) {
          const T* src = cols + r * n_cols;
          for (std::size_t l = l0; l < l0 + nl; ++l) {
            const std::size_t iz = (l / g.hout) * g.stride + kz;
            const std::size_t iy = (l % g.hout) * g.stride + ky;
            T* dst = padded + ((c * g.dp + iz) * g.hp + iy) * g.wp + kx;
            for (std::size_t ox = 0; ox < g.wout; ++ox) dst[ox * g.stride] += src[ox];
            src += g.wout;
          }
        }
      }
    }
  }
}

void check_pad(const Shape& s, std::size_t width, PaddingMode mode) {
  check_rank4(s, "pad3d input");
  if (mode == PaddingMode::kMirror) {
    for (std::size_t a = 1; a < 4; ++a) {
      require(width < s[a], ErrorCode::kMirrorTooWide,
              "mirror pad width " + std::to_string(width) + " >= extent " + std::to_string(s[a]) + " of " +
                  to_string(s));
    }
  }
}

std::vector<std::ptrdiff_t> source_table(std::size_t n, std::size_t width, PaddingMode mode) {
  std::vector<std::ptrdiff_t> table(n + 2 * width);
  for (std::size_t i = 0; i < table.size(); ++i) {
    table[i] = padded_source(static_cast<std::ptrdiff_t>(i), n, width, mode);
  }
  return table;
}

}  // namespace

std::ptrdiff_t padded_source(std::ptrdiff_t i, std::size_t n, std::size_t width, PaddingMode mode) noexcept {
  std::ptrdiff_t j = i - static_cast<std::ptrdiff_t>(width);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  if (j >= 0 && j <= last) return j;
  if (mode == PaddingMode::kZero) return -1;
  return j < 0 ? -j : 2 * last - j;
}

template <typename T>
Tensor<T> pad3d(const Tensor<T>& x, std::size_t width, PaddingMode mode) {
  const auto& s = x.shape();
  check_pad(s, width, mode);
  if (width == 0) return x;
  Tensor<T> out({s[0], s[1] + 2 * width, s[2] + 2 * width, s[3] + 2 * width});
  const auto tz = source_table(s[1], width, mode);
  const auto ty = source_table(s[2], width, mode);
  const auto tx = source_table(s[3], width, mode);
  T* dst = out.ptr();
  for (std::size_t c = 0; c < s[0]; ++c) {
    for (auto sz : tz) {
      for (auto sy : ty) {
        if (sz < 0 || sy < 0) {
          dst = std::fill_n(dst, tx.size(), T{0});
          continue;
        }
        const T* row = x.ptr() + ((c * s[1] + sz) * s[2] + sy) * s[3];
        for (auto sx : tx) *dst++ = sx < 0 ? T{0} : row[sx];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> pad3d_backward(const Tensor<T>& grad_padded, const Shape& input_shape, std::size_t width,
                         PaddingMode mode) {
  check_pad(input_shape, width, mode);
  if (width == 0) return grad_padded;
  const auto& s = input_shape;
  Tensor<T> dx(s);
  const auto tz = source_table(s[1], width, mode);
  const auto ty = source_table(s[2], width, mode);
  const auto tx = source_table(s[3], width, mode);
  const T* src = grad_padded.ptr();
  for (std::size_t c = 0; c < s[0]; ++c) {
    for (auto sz : tz) {
      for (auto sy : ty) {
        if (sz < 0 || sy < 0) {
          src += tx.size();
          continue;
        }
        T* row = dx.ptr() + ((c * s[1] + sz) * s[2] + sy) * s[3];
        for (auto sx : tx) {
          if (sx >= 0) row[sx] += *src;
          ++src;
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, const ConvSpec& spec) {
  const ConvGeometry g = geometry(x.shape(), weight.shape(), spec);
  if (bias) {
    require(bias->shape() == Shape{g.cout}, ErrorCode::kShapeMismatch, "conv3d bias shape " + to_string(bias->shape()));
  }
  const Tensor<T> padded = g.pad ? pad3d(x, g.pad, spec.padding) : Tensor<T>();
  const T* src = g.pad ? padded.ptr() : x.ptr();

  Tensor<T> out({g.cout, g.dout, g.hout, g.wout});
  const std::size_t rows = g.rows();
  const std::size_t total = g.columns();
  const std::size_t block = lines_per_block(g, kForwardBlockElements);
  std::vector<T> cols(rows * block * g.wout);
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  ConstMatMap<T> wmat(weight.ptr(), ei(g.cout), ei(rows), Eigen::OuterStride<>(ei(rows)));

  for (std::size_t l0 = 0; l0 < g.lines(); l0 += block) {
    const std::size_t nl = std::min(block, g.lines() - l0);
    const std::size_t n = nl * g.wout;
    im2col(src, g, l0, nl, cols.data());
    ConstMatMap<T> cmat(cols.data(), ei(rows), ei(n), Eigen::OuterStride<>(ei(n)));
    MatMap<T> ymat(out.ptr() + l0 * g.wout, ei(g.cout), ei(n), Eigen::OuterStride<>(ei(total)));
    ymat.noalias() = wmat * cmat;
  }
  if (bias) {
    for (std::size_t o = 0; o < g.cout; ++o) {
      T* row = out.ptr() + o * total;
      const T b = (*bias)[o];
      for (std::size_t i = 0; i < total; ++i) row[i] += b;
    }
  }
  return out;
}

template <typename T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out, const ConvSpec& spec,
                     Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const ConvGeometry g = geometry(x.shape(), weight.shape(), spec);
  const std::size_t total = g.columns();
  require(grad_out.shape() == Shape{g.cout, g.dout, g.hout, g.wout}, ErrorCode::kShapeMismatch,
          "conv3d_backward grad shape " + to_string(grad_out.shape()));

  if (dbias) {
    for (std::size_t o = 0; o < g.cout; ++o) {
      const T* row = grad_out.ptr() + o * total;
      T acc{0};
      for (std::size_t i = 0; i < total; ++i) acc += row[i];
      (*dbias)[o] += acc;
    }
  }
  if (!dx && !dweight) return;

  const Tensor<T> padded = g.pad ? pad3d(x, g.pad, spec.padding) : Tensor<T>();
  const T* src = g.pad ? padded.ptr() : x.ptr();
  std::vector<T> dpadded(dx ? g.cin * g.dp * g.hp * g.wp : 0, T{0});

  const std::size_t rows = g.rows();
  const std::size_t block = lines_per_block(g, kBackwardBlockElements);
  std::vector<T> cols(rows * block * g.wout);
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  ConstMatMap<T> wmat(weight.ptr(), ei(g.cout), ei(rows), Eigen::OuterStride<>(ei(rows)));

  for (std::size_t l0 = 0; l0 < g.lines(); l0 += block) {
    const std::size_t nl = std::min(block, g.lines() - l0);
    const std::size_t n = nl * g.wout;
    ConstMatMap<T> dymat(grad_out.ptr() + l0 * g.wout, ei(g.cout), ei(n), Eigen::OuterStride<>(ei(total)));
    if (dweight) {
      im2col(src, g, l0, nl, cols.data());
      ConstMatMap<T> cmat(cols.data(), ei(rows), ei(n), Eigen::OuterStride<>(ei(n)));
      MatMap<T> dwmat(dweight->ptr(), ei(g.cout), ei(rows), Eigen::OuterStride<>(ei(rows)));
      dwmat.noalias() += dymat * cmat.transpose();
    }
    if (dx) {
      MatMap<T> cmat(cols.data(), ei(rows), ei(n), Eigen::OuterStride<>(ei(n)));
      cmat.noalias() = wmat.transpose() * dymat;
      col2im_add(cols.data(), g, l0, nl, dpadded.data());
    }
  }
  if (dx) {
    Tensor<T> gp({g.cin, g.dp, g.hp, g.wp}, std::move(dpadded));
    if (g.pad) {
      dx->add_(pad3d_backward(gp, x.shape(), g.pad, spec.padding));
    } else {
      dx->add_(gp);
    }
  }
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  check_rank4(x.shape(), "global_avg_pool input");
  const std::size_t c = x.dim(0);
  const std::size_t spatial = x.size() / c;
  Tensor<T> out({c});
  for (std::size_t i = 0; i < c; ++i) {
    const T* row = x.ptr() + i * spatial;
    T acc{0};
    for (std::size_t j = 0; j < spatial; ++j) acc += row[j];
    out[i] = acc / static_cast<T>(spatial);
  }
  return out;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias) {
  require(x.rank() == 1 && weight.rank() == 2 && weight.dim(1) == x.dim(0), ErrorCode::kShapeMismatch,
          "dense: input " + to_string(x.shape()) + " weight " + to_string(weight.shape()));
  const std::size_t o = weight.dim(0), f = weight.dim(1);
  if (bias) require(bias->shape() == Shape{o}, ErrorCode::kShapeMismatch, "dense bias shape " + to_string(bias->shape()));
  Tensor<T> out({o});
  for (std::size_t i = 0; i < o; ++i) {
    const T* row = weight.ptr() + i * f;
    T acc = bias ? (*bias)[i] : T{0};
    for (std::size_t j = 0; j < f; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> out = logits;
  const T peak = *std::max_element(out.data().begin(), out.data().end());
  T sum{0};
  for (auto& v : out.data()) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (auto& v : out.data()) v /= sum;
  return out;
}

#define ILEUMNET_INSTANTIATE_KERNELS(T)                                                                      \
  template Tensor<T> pad3d(const Tensor<T>&, std::size_t, PaddingMode);                                      \
  template Tensor<T> pad3d_backward(const Tensor<T>&, const Shape&, std::size_t, PaddingMode);               \
  template Tensor<T> conv3d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvSpec&);          \
  template void conv3d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvSpec&,       \
                                Tensor<T>*, Tensor<T>*, Tensor<T>*);                                         \
  template Tensor<T> relu(const Tensor<T>&);                                                                 \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                                      \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);                            \
  template Tensor<T> softmax(const Tensor<T>&);

ILEUMNET_INSTANTIATE_KERNELS(float)
ILEUMNET_INSTANTIATE_KERNELS(double)

}  // namespace kernels
}  // namespace ileumnet
