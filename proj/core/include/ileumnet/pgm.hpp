#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ileumnet/tensor.hpp"
#include "ileumnet/volume.hpp"

namespace ileumnet {

/// Binary 8-bit greyscale image, row-major.
struct GreyImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

void write_pgm(const std::string& path, const GreyImage& image);
GreyImage read_pgm(const std::string& path);

/// Raw and overlay slices for one gated-grid depth index. The raw slice is the
/// window slice at the centre of that index, scaled by the window's min/max.
/// The overlay multiplies it by clamp(alpha * N / 2, 0, 1), N the number of
/// map positions, so a uniform map dims the slice by half.
struct OverlaySlice {
  GreyImage raw;
  GreyImage overlay;
};

// map: [1, D', H', W'] attention map over the gated grid.
std::vector<OverlaySlice> attention_overlays(const Volume& window, const Tensor<float>& map);

/// Writes `<id>_raw_z<k>.pgm` and `<id>_z<k>.pgm` per gated-grid depth index
/// and returns the overlay paths.
std::vector<std::string> export_attention(const std::string& out_dir, const std::string& id, const Volume& window,
                                          const Tensor<float>& map);

}  // namespace ileumnet
