#include <algorithm>
#include <array>
#include <cmath>

#include "orts/imaging.hpp"

namespace orts {

namespace {

constexpr std::array<std::array<int, 2>, 4> kNbr4{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

}  // namespace

PoissonResult poisson_blend(const RasterImage& object_src, const RegionMask& mask,
                            const RasterImage& background, double tol, int max_iters) {
  if (object_src.dims() != background.dims() || object_src.dims() != mask.dims()) {
    throw Error("poisson_blend: dimension mismatch");
  }
  const int w = mask.width();
  const int h = mask.height();
  std::vector<int> interior;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.test(x, y)) {
        continue;
      }
      if (x == 0 || y == 0 || x == w - 1 || y == h - 1) {
        throw Error("poisson_blend: mask touches the image border");
      }
      interior.push_back(y * w + x);
    }
  }
  if (interior.empty()) {
    throw Error("poisson_blend: empty mask");
  }

  const auto src = object_src.data();
  const auto bg = background.data();
  std::vector<double> f(bg.begin(), bg.end());

  // Guidance: discrete Laplacian of the source, per channel.
  std::vector<double> guide(interior.size() * 3);
  std::array<double, 3> offset{};
  std::size_t boundary_edges = 0;
  for (std::size_t k = 0; k < interior.size(); ++k) {
    const int p = interior[k];
    const int x = p % w;
    const int y = p / w;
    for (const auto& [dx, dy] : kNbr4) {
      const int q = (y + dy) * w + (x + dx);
      if (!mask.test(x + dx, y + dy)) {
        ++boundary_edges;
        for (int c = 0; c < 3; ++c) {
          offset[c] += static_cast<double>(bg[q * 3 + c]) - src[q * 3 + c];
        }
      }
    }
    for (int c = 0; c < 3; ++c) {
      double lap = 4.0 * src[p * 3 + c];
      for (const auto& [dx, dy] : kNbr4) {
        lap -= src[((y + dy) * w + (x + dx)) * 3 + c];
      }
      guide[k * 3 + c] = lap;
    }
  }
  for (int c = 0; c < 3; ++c) {
    offset[c] /= static_cast<double>(std::max<std::size_t>(boundary_edges, 1));
  }
  for (const int p : interior) {
    for (int c = 0; c < 3; ++c) {
      f[p * 3 + c] = src[p * 3 + c] + offset[c];
    }
  }

  const auto residual = [&] {
    double sum = 0.0;
    for (std::size_t k = 0; k < interior.size(); ++k) {
      const int p = interior[k];
      for (int c = 0; c < 3; ++c) {
        const double nb = f[(p + 1) * 3 + c] + f[(p - 1) * 3 + c] + f[(p + w) * 3 + c] +
                          f[(p - w) * 3 + c];
        sum += std::abs(4.0 * f[p * 3 + c] - nb - guide[k * 3 + c]);
      }
    }
    return sum / static_cast<double>(interior.size() * 3);
  };

  PoissonResult result;
  result.residual = residual();
  constexpr int kCheckEvery = 4;
  while (result.residual > tol && result.iterations < max_iters) {
    for (std::size_t k = 0; k < interior.size(); ++k) {
      const int p = interior[k];
      for (int c = 0; c < 3; ++c) {
        const double nb = f[(p + 1) * 3 + c] + f[(p - 1) * 3 + c] + f[(p + w) * 3 + c] +
                          f[(p - w) * 3 + c];
        f[p * 3 + c] = (nb + guide[k * 3 + c]) * 0.25;
      }
    }
    ++result.iterations;
    if (result.iterations % kCheckEvery == 0 || result.iterations == max_iters) {
      result.residual = residual();
    }
  }
  result.converged = result.residual <= tol;

  result.image = background;
  auto out = result.image.data();
  for (const int p : interior) {
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(std::round(f[p * 3 + c]), 0.0, 255.0);
      out[p * 3 + c] = static_cast<std::uint8_t>(v);
    }
  }
  result.field = std::move(f);
  return result;
}

}  // namespace orts
