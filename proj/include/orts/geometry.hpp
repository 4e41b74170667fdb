#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace orts {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dims {
  int width = 0;
  int height = 0;

  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Axis-aligned pixel box, half-open: covers columns [x, x+w) and rows [y, y+h).
struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  std::int64_t area() const { return static_cast<std::int64_t>(w) * h; }
  bool empty() const { return w <= 0 || h <= 0; }

  /// Intersection with the image rectangle; may come back empty.
  BoundingBox clamped(Dims dims) const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Binary pixel grid; one byte per pixel (0 or 1), row-major.
class RegionMask {
 public:
  RegionMask() = default;
  RegionMask(int width, int height);
  explicit RegionMask(Dims dims) : RegionMask(dims.width, dims.height) {}

  static RegionMask from_box(Dims dims, const BoundingBox& box);

  int width() const { return width_; }
  int height() const { return height_; }
  Dims dims() const { return {width_, height_}; }

  bool test(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }
  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_ && test(x, y);
  }

  std::size_t popcount() const;
  bool any() const { return popcount() > 0; }

  /// Tight box around set bits; nullopt for an empty mask.
  std::optional<BoundingBox> tight_bbox() const;

  RegionMask complement() const;
  RegionMask operator|(const RegionMask& other) const;
  RegionMask operator&(const RegionMask& other) const;

  /// Square-window dilation/erosion with Chebyshev radius r. Pixels outside the
  /// image are ignored for dilation and count as "outside" for erosion only
  /// when `border_is_outside` is set.
  RegionMask dilate(int r) const;
  RegionMask erode(int r, bool border_is_outside = false) const;

  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::vector<std::uint8_t>& bits() { return bits_; }

  friend bool operator==(const RegionMask&, const RegionMask&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Uncompressed row-major run-length encoding: counts alternate starting with
/// a (possibly zero-length) run of unset pixels.
std::vector<std::uint32_t> encode_rle_row_major(const RegionMask& mask);
RegionMask decode_rle_row_major(const std::vector<std::uint32_t>& counts, Dims dims);

}  // namespace orts
