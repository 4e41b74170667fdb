#include "orts/geometry.hpp"

#include <algorithm>
#include <numeric>

namespace orts {

BoundingBox BoundingBox::clamped(Dims dims) const {
  const int x0 = std::clamp(x, 0, dims.width);
  const int y0 = std::clamp(y, 0, dims.height);
  const int x1 = std::clamp(right(), 0, dims.width);
  const int y1 = std::clamp(bottom(), 0, dims.height);
  return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

RegionMask::RegionMask(int width, int height) : width_(width), height_(height) {
  if (width < 0 || height < 0) {
    throw Error("RegionMask: negative dimensions");
  }
  bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

RegionMask RegionMask::from_box(Dims dims, const BoundingBox& box) {
  RegionMask mask(dims);
  const BoundingBox b = box.clamped(dims);
  for (int y = b.y; y < b.bottom(); ++y) {
    for (int x = b.x; x < b.right(); ++x) {
      mask.set(x, y);
    }
  }
  return mask;
}

std::size_t RegionMask::popcount() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::optional<BoundingBox> RegionMask::tight_bbox() const {
  int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (test(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) {
    return std::nullopt;
  }
  return BoundingBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

RegionMask RegionMask::complement() const {
  RegionMask out(width_, height_);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    out.bits_[i] = bits_[i] ? 0 : 1;
  }
  return out;
}

RegionMask RegionMask::operator|(const RegionMask& other) const {
  if (dims() != other.dims()) {
    throw Error("RegionMask: dimension mismatch in union");
  }
  RegionMask out(width_, height_);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    out.bits_[i] = (bits_[i] | other.bits_[i]) ? 1 : 0;
  }
  return out;
}

RegionMask RegionMask::operator&(const RegionMask& other) const {
  if (dims() != other.dims()) {
    throw Error("RegionMask: dimension mismatch in intersection");
  }
  RegionMask out(width_, height_);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    out.bits_[i] = (bits_[i] & other.bits_[i]) ? 1 : 0;
  }
  return out;
}

namespace {

// Separable window max with Chebyshev radius r via prefix counts;
// out-of-image samples are skipped.
RegionMask window_max(const RegionMask& in, int r) {
  const int w = in.width();
  const int h = in.height();
  RegionMask horiz(w, h);
  std::vector<int> prefix(static_cast<std::size_t>(std::max(w, h)) + 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      prefix[x + 1] = prefix[x] + (in.test(x, y) ? 1 : 0);
    }
    for (int x = 0; x < w; ++x) {
      const int lo = std::max(0, x - r);
      const int hi = std::min(w, x + r + 1);
      horiz.set(x, y, prefix[hi] - prefix[lo] > 0);
    }
  }
  RegionMask out(w, h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      prefix[y + 1] = prefix[y] + (horiz.test(x, y) ? 1 : 0);
    }
    for (int y = 0; y < h; ++y) {
      const int lo = std::max(0, y - r);
      const int hi = std::min(h, y + r + 1);
      out.set(x, y, prefix[hi] - prefix[lo] > 0);
    }
  }
  return out;
}

}  // namespace

RegionMask RegionMask::dilate(int r) const {
  if (r <= 0) {
    return *this;
  }
  return window_max(*this, r);
}

RegionMask RegionMask::erode(int r, bool border_is_outside) const {
  if (r <= 0) {
    return *this;
  }
  RegionMask out = window_max(complement(), r).complement();
  if (border_is_outside) {
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        if (x < r || y < r || x >= width_ - r || y >= height_ - r) {
          out.set(x, y, false);
        }
      }
    }
  }
  return out;
}

std::vector<std::uint32_t> encode_rle_row_major(const RegionMask& mask) {
  std::vector<std::uint32_t> counts;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (const auto b : mask.bits()) {
    if (b != current) {
      counts.push_back(run);
      run = 0;
      current = b;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

RegionMask decode_rle_row_major(const std::vector<std::uint32_t>& counts, Dims dims) {
  RegionMask mask(dims);
  const std::size_t total = mask.bits().size();
  const std::size_t sum = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (sum != total) {
    throw Error("mask_rle: run lengths sum to " + std::to_string(sum) + ", expected " +
                std::to_string(total));
  }
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (const auto c : counts) {
    std::fill_n(mask.bits().begin() + static_cast<std::ptrdiff_t>(pos), c, value);
    pos += c;
    value ^= 1U;
  }
  return mask;
}

}  // namespace orts
