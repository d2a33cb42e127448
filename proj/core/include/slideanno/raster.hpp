#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace slideanno {

/// Owning 8-bit RGBA image, row-major, no padding between rows.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, std::array<uint8_t, 4> fill = {255, 255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  uint8_t* pixel(int x, int y) { return data_.data() + offset(x, y); }
  const uint8_t* pixel(int x, int y) const { return data_.data() + offset(x, y); }

  std::span<uint8_t> row(int y) { return {data_.data() + offset(0, y), row_bytes()}; }
  std::span<const uint8_t> row(int y) const {
    return {data_.data() + offset(0, y), row_bytes()};
  }

  std::span<const uint8_t> bytes() const { return data_; }
  std::span<uint8_t> bytes() { return data_; }
  std::size_t row_bytes() const { return static_cast<std::size_t>(width_) * 4; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 4;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<uint8_t> data_;
};

/// Lossless PNG encoding of an RGBA raster. Output bytes are deterministic.
std::vector<uint8_t> encode_png(const Raster& raster);
Raster decode_png(std::span<const uint8_t> bytes);

void write_png_file(const Raster& raster, const std::filesystem::path& path);
Raster read_png_file(const std::filesystem::path& path);

}  // namespace slideanno
