#pragma once

// Tape-free forward and backward kernels. The autograd layer in ops.hpp wraps
// these; tests also call them directly against naive-loop oracles.

#include <cstddef>
#include <optional>
#include <string_view>

#include "ileumnet/tensor.hpp"

namespace ileumnet {

enum class PaddingMode { kZero, kMirror };

std::string_view to_string(PaddingMode mode) noexcept;
PaddingMode parse_padding_mode(std::string_view text);

/// Convolution geometry. Kernels are cubic: 3 for feature convolutions, 1 for
/// the skip-path projection. A 3-kernel uses padding width 1, a 1-kernel none.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  PaddingMode padding = PaddingMode::kZero;

  std::size_t pad_width() const noexcept { return kernel / 2; }
  std::size_t output_extent(std::size_t in) const noexcept {
    return (in + 2 * pad_width() - kernel) / stride + 1;
  }
  Shape weight_shape() const { return {out_channels, in_channels, kernel, kernel, kernel}; }
  void validate() const;
};

namespace kernels {

// Index of the source voxel feeding padded position `i` along an axis of
// length `n`; -1 means "zero" under zero padding.
std::ptrdiff_t padded_source(std::ptrdiff_t i, std::size_t n, std::size_t width, PaddingMode mode) noexcept;

template <typename T>
Tensor<T> pad3d(const Tensor<T>& x, std::size_t width, PaddingMode mode);

// Folds a gradient w.r.t. the padded tensor back onto the unpadded input.
template <typename T>
Tensor<T> pad3d_backward(const Tensor<T>& grad_padded, const Shape& input_shape, std::size_t width,
                         PaddingMode mode);

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, const ConvSpec& spec);

// Accumulates (+=) into whichever of dx / dweight / dbias are non-null.
template <typename T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                     const ConvSpec& spec, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias);

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace kernels
}  // namespace ileumnet
