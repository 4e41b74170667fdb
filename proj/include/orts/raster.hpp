#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "orts/geometry.hpp"

namespace orts {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  std::uint8_t operator[](int c) const { return c == 0 ? r : (c == 1 ? g : b); }
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGB image, row-major, interleaved channels.
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage() = default;
  RasterImage(int width, int height, Rgb fill = {});
  explicit RasterImage(Dims dims, Rgb fill = {}) : RasterImage(dims.width, dims.height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  Dims dims() const { return {width_, height_}; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  std::uint8_t at(int x, int y, int c) const { return data_[offset(x, y) + c]; }
  std::uint8_t& at(int x, int y, int c) { return data_[offset(x, y) + c]; }

  Rgb pixel(int x, int y) const {
    const auto o = offset(x, y);
    return {data_[o], data_[o + 1], data_[o + 2]};
  }
  void set_pixel(int x, int y, Rgb v) {
    const auto o = offset(x, y);
    data_[o] = v.r;
    data_[o + 1] = v.g;
    data_[o + 2] = v.b;
  }

  std::span<const std::uint8_t> data() const { return data_; }
  std::span<std::uint8_t> data() { return data_; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
           kChannels;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// PNG codec. Decoding accepts gray, palette, and alpha variants; alpha is
// flattened over white. Encoding always writes 8-bit RGB.
RasterImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RasterImage& img);
RasterImage read_png(const std::filesystem::path& path);
void write_png(const RasterImage& img, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace orts
