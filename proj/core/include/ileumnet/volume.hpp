#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ileumnet/tensor.hpp"

namespace ileumnet {

using Vec3 = std::array<double, 3>;

/// Voxel extents in [D, H, W] order.
struct Extents3 {
  std::size_t d = 1, h = 1, w = 1;

  std::size_t operator[](std::size_t axis) const { return axis == 0 ? d : axis == 1 ? h : w; }
  std::size_t& operator[](std::size_t axis) { return axis == 0 ? d : axis == 1 ? h : w; }
  std::size_t voxels() const noexcept { return d * h * w; }
  friend bool operator==(const Extents3&, const Extents3&) = default;
};

std::string to_string(const Extents3& e);

/// Axis-aligned voxel box: [lo, lo + size) per axis.
struct Box3 {
  std::array<std::size_t, 3> lo{0, 0, 0};
  Extents3 size;
  friend bool operator==(const Box3&, const Box3&) = default;
};

/// Dense scalar grid, [D, H, W] row-major.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Extents3 extents, float fill = 0.0f);
  Volume(Extents3 extents, std::vector<float> data);

  const Extents3& extents() const noexcept { return extents_; }
  const std::optional<Vec3>& spacing() const noexcept { return spacing_; }
  void set_spacing(std::optional<Vec3> spacing) { spacing_ = spacing; }

  float& at(std::size_t z, std::size_t y, std::size_t x) noexcept {
    return data_[(z * extents_.h + y) * extents_.w + x];
  }
  float at(std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return data_[(z * extents_.h + y) * extents_.w + x];
  }
  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  // Copies the box, which must lie inside the volume.
  Volume crop(const Box3& box) const;

  // [1, D, H, W] network input.
  template <typename T>
  Tensor<T> to_tensor() const {
    std::vector<T> v(data_.begin(), data_.end());
    return Tensor<T>({1, extents_.d, extents_.h, extents_.w}, std::move(v));
  }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Extents3 extents_;
  std::optional<Vec3> spacing_;
  std::vector<float> data_;
};

/// `.vol` file:
///   VOL3D v1\n
///   extents <D> <H> <W>\n
///   [spacing <sd> <sh> <sw>\n]
///   data\n
/// followed by D*H*W little-endian float32 values in [D, H, W] row-major order.
void write_volume(const std::string& path, const Volume& volume);
Volume read_volume(const std::string& path);

}  // namespace ileumnet
