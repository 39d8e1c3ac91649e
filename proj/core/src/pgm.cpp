#include "ileumnet/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace ileumnet {
namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); }

}  // namespace

void write_pgm(const std::string& path, const GreyImage& image) {
  require(image.pixels.size() == image.width * image.height, ErrorCode::kShapeMismatch, "image size mismatch");
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path);
}

GreyImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path);
  std::string magic;
  int maxval = 0;
  GreyImage img;
  in >> magic >> img.width >> img.height >> maxval;
  require(in && magic == "P5" && maxval == 255, ErrorCode::kIo, path + ": not an 8-bit binary PGM");
  in.get();
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  require(static_cast<bool>(in), ErrorCode::kIo, path + ": truncated");
  return img;
}

std::vector<OverlaySlice> attention_overlays(const Volume& window, const Tensor<float>& map) {
  require(map.rank() == 4 && map.dim(0) == 1, ErrorCode::kShapeMismatch,
          "attention map must be [1,D,H,W], got " + to_string(map.shape()));
  const auto& e = window.extents();
  const std::size_t md = map.dim(1), mh = map.dim(2), mw = map.dim(3);
  const double n = static_cast<double>(map.size());
  const auto [lo_it, hi_it] = std::minmax_element(window.data().begin(), window.data().end());
  const double lo = *lo_it, range = static_cast<double>(*hi_it) - lo;

  std::vector<OverlaySlice> out(md);
  for (std::size_t k = 0; k < md; ++k) {
    const auto z = std::min(e.d - 1, static_cast<std::size_t>((static_cast<double>(k) + 0.5) * static_cast<double>(e.d) /
                                                              static_cast<double>(md)));
    OverlaySlice& s = out[k];
    s.raw = {e.w, e.h, std::vector<std::uint8_t>(e.h * e.w)};
    s.overlay = s.raw;
    for (std::size_t y = 0; y < e.h; ++y) {
      const auto my = std::min(mh - 1, y * mh / e.h);
      for (std::size_t x = 0; x < e.w; ++x) {
        const auto mx = std::min(mw - 1, x * mw / e.w);
        const double raw = range > 0.0 ? (window.at(z, y, x) - lo) / range : 0.0;
        const double gain = std::clamp(static_cast<double>(map.at(0, k, my, mx)) * n / 2.0, 0.0, 1.0);
        s.raw.pixels[y * e.w + x] = to_byte(raw);
        s.overlay.pixels[y * e.w + x] = to_byte(raw * gain);
      }
    }
  }
  return out;
}

std::vector<std::string> export_attention(const std::string& out_dir, const std::string& id, const Volume& window,
                                          const Tensor<float>& map) {
  std::filesystem::create_directories(out_dir);
  const auto slices = attention_overlays(window, map);
  std::vector<std::string> paths;
  for (std::size_t k = 0; k < slices.size(); ++k) {
    const auto base = std::filesystem::path(out_dir);
    write_pgm((base / (id + "_raw_z" + std::to_string(k) + ".pgm")).string(), slices[k].raw);
    const auto overlay = (base / (id + "_z" + std::to_string(k) + ".pgm")).string();
    write_pgm(overlay, slices[k].overlay);
    paths.push_back(overlay);
  }
  return paths;
}

}  // namespace ileumnet
