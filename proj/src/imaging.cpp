#include "orts/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace orts {

namespace {

void require_same_dims(Dims a, Dims b, const char* what) {
  if (a != b) {
    throw Error(std::string(what) + ": dimension mismatch (" + std::to_string(a.width) + "x" +
                std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                std::to_string(b.height) + ")");
  }
}

}  // namespace

RegionMask boundary_band(const RegionMask& mask, int d) {
  const RegionMask inside_reach = mask.dilate(d);
  const RegionMask outside_reach = mask.complement().dilate(d);
  RegionMask band(mask.dims());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const bool in = mask.test(x, y);
      band.set(x, y, in ? outside_reach.test(x, y) : inside_reach.test(x, y));
    }
  }
  return band;
}

RasterImage median_filter(const RasterImage& img, const RegionMask& band, int kernel) {
  if (kernel < 3 || kernel % 2 == 0) {
    throw Error("median_filter: kernel must be odd and >= 3, got " + std::to_string(kernel));
  }
  require_same_dims(img.dims(), band.dims(), "median_filter");
  const int r = kernel / 2;
  const int w = img.width();
  const int h = img.height();
  RasterImage out = img;
  std::vector<std::uint8_t> window(static_cast<std::size_t>(kernel) * kernel);
  const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!band.test(x, y)) {
        continue;
      }
      for (int c = 0; c < RasterImage::kChannels; ++c) {
        std::size_t n = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = std::clamp(x + dx, 0, w - 1);
            window[n++] = img.at(xx, yy, c);
          }
        }
        std::nth_element(window.begin(), mid, window.end());
        out.at(x, y, c) = *mid;
      }
    }
  }
  return out;
}

RasterImage composite(const RasterImage& object_src, const RegionMask& mask,
                      const RasterImage& background) {
  require_same_dims(object_src.dims(), background.dims(), "composite");
  require_same_dims(object_src.dims(), mask.dims(), "composite");
  RasterImage out = background;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (mask.test(x, y)) {
        out.set_pixel(x, y, object_src.pixel(x, y));
      }
    }
  }
  return out;
}

RasterImage fill_region(const RasterImage& img, const RegionMask& mask, Rgb color) {
  require_same_dims(img.dims(), mask.dims(), "fill_region");
  RasterImage out = img;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (mask.test(x, y)) {
        out.set_pixel(x, y, color);
      }
    }
  }
  return out;
}

RasterImage gray_fill(const RasterImage& img, const RegionMask& region, Rgb gray) {
  return fill_region(img, region, gray);
}

std::optional<MarginStats> margin_stats(const RasterImage& img, const RegionMask& mask,
                                        const BoundingBox& bbox) {
  require_same_dims(img.dims(), mask.dims(), "margin_stats");
  const BoundingBox b = bbox.clamped(img.dims());
  std::array<std::vector<std::uint8_t>, 3> values;
  for (int y = b.y; y < b.bottom(); ++y) {
    for (int x = b.x; x < b.right(); ++x) {
      if (!mask.test(x, y)) {
        for (int c = 0; c < 3; ++c) {
          values[static_cast<std::size_t>(c)].push_back(img.at(x, y, c));
        }
      }
    }
  }
  if (values[0].empty()) {
    return std::nullopt;
  }
  MarginStats stats;
  std::array<std::uint8_t, 3> mean{}, median{};
  for (std::size_t c = 0; c < 3; ++c) {
    auto& v = values[c];
    const std::uint64_t n = v.size();
    std::uint64_t sum = 0;
    for (const auto e : v) {
      sum += e;
    }
    mean[c] = static_cast<std::uint8_t>((2 * sum + n) / (2 * n));
    const auto lower = v.begin() + static_cast<std::ptrdiff_t>((n - 1) / 2);
    std::nth_element(v.begin(), lower, v.end());
    median[c] = *lower;
  }
  stats.mean = {mean[0], mean[1], mean[2]};
  stats.median = {median[0], median[1], median[2]};
  return stats;
}

RasterImage resize(const RasterImage& img, Dims new_dims) {
  if (new_dims.width <= 0 || new_dims.height <= 0) {
    throw Error("resize: target dimensions must be positive");
  }
  if (img.empty()) {
    throw Error("resize: empty source image");
  }
  if (img.dims() == new_dims) {
    return img;
  }
  const double sx = static_cast<double>(img.width()) / new_dims.width;
  const double sy = static_cast<double>(img.height()) / new_dims.height;
  RasterImage out(new_dims);
  for (int y = 0; y < new_dims.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < new_dims.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
        const double bot = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
        const double v = top * (1 - wy) + bot * wy;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

}  // namespace orts
