#include "ileumnet/volume.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ileumnet {

std::string to_string(const Extents3& e) {
  return std::to_string(e.d) + "x" + std::to_string(e.h) + "x" + std::to_string(e.w);
}

Volume::Volume(Extents3 extents, float fill) : extents_(extents), data_(extents.voxels(), fill) {
  require(extents.d > 0 && extents.h > 0 && extents.w > 0, ErrorCode::kShapeMismatch,
          "volume extents must be positive: " + to_string(extents));
}

Volume::Volume(Extents3 extents, std::vector<float> data) : extents_(extents), data_(std::move(data)) {
  require(extents.d > 0 && extents.h > 0 && extents.w > 0, ErrorCode::kShapeMismatch,
          "volume extents must be positive: " + to_string(extents));
  require(data_.size() == extents.voxels(), ErrorCode::kShapeMismatch,
          "volume data length " + std::to_string(data_.size()) + " != " + to_string(extents));
}

Volume Volume::crop(const Box3& box) const {
  for (std::size_t a = 0; a < 3; ++a) {
    require(box.size[a] > 0 && box.lo[a] + box.size[a] <= extents_[a], ErrorCode::kWindowLargerThanVolume,
            "crop box exceeds volume " + to_string(extents_));
  }
  Volume out(box.size);
  out.spacing_ = spacing_;
  for (std::size_t z = 0; z < box.size.d; ++z) {
    for (std::size_t y = 0; y < box.size.h; ++y) {
      const float* src = &data_[((box.lo[0] + z) * extents_.h + box.lo[1] + y) * extents_.w + box.lo[2]];
      std::copy(src, src + box.size.w, &out.at(z, y, 0));
    }
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string read_line(std::istream& in, const std::string& path) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kIo, "truncated volume header: " + path);
  return line;
}

}  // namespace

void write_volume(const std::string& path, const Volume& volume) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open volume for writing: " + path);
  const auto& e = volume.extents();
  out << "VOL3D v1\n" << "extents " << e.d << ' ' << e.h << ' ' << e.w << '\n';
  if (volume.spacing()) {
    const auto& s = *volume.spacing();
    out << "spacing " << format_double(s[0]) << ' ' << format_double(s[1]) << ' ' << format_double(s[2]) << '\n';
  }
  out << "data\n";
  std::vector<char> bytes(volume.data().size() * 4);
  for (std::size_t i = 0; i < volume.data().size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(volume.data()[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing volume: " + path);
}

Volume read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open volume: " + path);
  require(read_line(in, path) == "VOL3D v1", ErrorCode::kIo, "not a VOL3D v1 file: " + path);

  Extents3 extents;
  std::optional<Vec3> spacing;
  {
    std::istringstream line(read_line(in, path));
    std::string key;
    line >> key >> extents.d >> extents.h >> extents.w;
    require(key == "extents" && !line.fail() && extents.voxels() > 0, ErrorCode::kIo, "bad extents line in " + path);
  }
  std::string next = read_line(in, path);
  if (next.rfind("spacing ", 0) == 0) {
    std::istringstream line(next);
    std::string key;
    Vec3 s{};
    line >> key >> s[0] >> s[1] >> s[2];
    require(!line.fail(), ErrorCode::kIo, "bad spacing line in " + path);
    spacing = s;
    next = read_line(in, path);
  }
  require(next == "data", ErrorCode::kIo, "expected 'data' line in " + path);

  std::vector<unsigned char> bytes(extents.voxels() * 4);
  require(static_cast<bool>(in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))),
          ErrorCode::kIo, "truncated volume data: " + path);
  std::vector<float> data(extents.voxels());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) | (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    data[i] = std::bit_cast<float>(bits);
  }
  Volume v(extents, std::move(data));
  v.set_spacing(spacing);
  return v;
}

}  // namespace ileumnet
