#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>

#include "orts/imaging.hpp"

namespace orts {

namespace {

constexpr std::array<std::array<int, 2>, 4> kNbr4{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

/// Shared argument checks. Returns false when the mask is empty (identity).
bool check_inpaint_args(const RasterImage& img, const RegionMask& mask, const char* what) {
  if (img.dims() != mask.dims()) {
    throw Error(std::string(what) + ": dimension mismatch");
  }
  const std::size_t n = mask.popcount();
  if (n == mask.bits().size()) {
    throw Error(std::string(what) + ": mask covers the whole image");
  }
  return n > 0;
}

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

enum : std::uint8_t { kKnown = 0, kBand = 1, kInside = 2 };

class FastMarcher {
 public:
  FastMarcher(const RasterImage& img, const RegionMask& mask, int radius)
      : w_(img.width()),
        h_(img.height()),
        radius_(radius),
        flag_(mask.bits().size(), kKnown),
        t_(mask.bits().size(), 0.0),
        val_(img.data().begin(), img.data().end()) {
    for (std::size_t i = 0; i < flag_.size(); ++i) {
      if (mask.bits()[i]) {
        flag_[i] = kInside;
        t_[i] = kFar;
      }
    }
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        const int p = y * w_ + x;
        if (flag_[p] != kKnown) {
          continue;
        }
        for (const auto& [dx, dy] : kNbr4) {
          if (inside_image(x + dx, y + dy) && flag_[p + dy * w_ + dx] == kInside) {
            flag_[p] = kBand;
            heap_.emplace(0.0, p);
            break;
          }
        }
      }
    }
  }

  std::vector<double> run() {
    while (!heap_.empty()) {
      const auto [t, p] = heap_.top();
      heap_.pop();
      if (flag_[p] == kKnown) {
        continue;
      }
      flag_[p] = kKnown;
      const int x = p % w_;
      const int y = p / w_;
      for (const auto& [dx, dy] : kNbr4) {
        const int nx = x + dx;
        const int ny = y + dy;
        if (!inside_image(nx, ny)) {
          continue;
        }
        const int n = ny * w_ + nx;
        if (flag_[n] != kInside) {
          continue;
        }
        t_[n] = std::min({solve(nx, ny - 1, nx - 1, ny), solve(nx, ny + 1, nx - 1, ny),
                          solve(nx, ny - 1, nx + 1, ny), solve(nx, ny + 1, nx + 1, ny)});
        fill(nx, ny);
        flag_[n] = kBand;
        heap_.emplace(t_[n], n);
      }
    }
    return std::move(val_);
  }

 private:
  static constexpr double kFar = 1e6;

  bool inside_image(int x, int y) const { return x >= 0 && y >= 0 && x < w_ && y < h_; }
  bool known(int x, int y) const { return inside_image(x, y) && flag_[y * w_ + x] != kInside; }
  double time(int x, int y) const { return known(x, y) ? t_[y * w_ + x] : kFar; }

  // Eikonal update from one vertical and one horizontal neighbour.
  double solve(int x1, int y1, int x2, int y2) const {
    const bool k1 = known(x1, y1);
    const bool k2 = known(x2, y2);
    const double a = time(x1, y1);
    const double b = time(x2, y2);
    if (k1 && k2) {
      const double d = a - b;
      if (std::abs(d) >= 1.0) {
        return 1.0 + std::min(a, b);
      }
      return (a + b + std::sqrt(2.0 - d * d)) * 0.5;
    }
    if (k1) {
      return 1.0 + a;
    }
    if (k2) {
      return 1.0 + b;
    }
    return 1.0 + kFar;
  }

  // One-sided or central difference of `get` along (dx, dy) over known pixels.
  template <typename Get>
  double diff(int x, int y, int dx, int dy, Get get) const {
    const bool fwd = known(x + dx, y + dy);
    const bool bwd = known(x - dx, y - dy);
    if (fwd && bwd) {
      return (get(x + dx, y + dy) - get(x - dx, y - dy)) * 0.5;
    }
    if (fwd) {
      return get(x + dx, y + dy) - get(x, y);
    }
    if (bwd) {
      return get(x, y) - get(x - dx, y - dy);
    }
    return 0.0;
  }

  void fill(int x, int y) {
    const double tp = t_[y * w_ + x];
    const auto t_at = [&](int xx, int yy) { return xx == x && yy == y ? tp : t_[yy * w_ + xx]; };
    const double gtx = diff(x, y, 1, 0, t_at);
    const double gty = diff(x, y, 0, 1, t_at);
    const double gt_norm = std::hypot(gtx, gty);

    std::array<double, 3> acc{};
    double wsum = 0.0;
    for (int qy = y - radius_; qy <= y + radius_; ++qy) {
      for (int qx = x - radius_; qx <= x + radius_; ++qx) {
        if (!known(qx, qy)) {
          continue;
        }
        const int rx = x - qx;
        const int ry = y - qy;
        const int len2 = rx * rx + ry * ry;
        if (len2 == 0 || len2 > radius_ * radius_) {
          continue;
        }
        const double len = std::sqrt(static_cast<double>(len2));
        double dir = gt_norm > 0 ? std::abs(rx * gtx + ry * gty) / (len * gt_norm) : 1.0;
        dir = std::max(dir, 0.01);
        const double dst = 1.0 / len2;
        const double lev = 1.0 / (1.0 + std::abs(t_[qy * w_ + qx] - tp));
        const double wgt = dir * dst * lev;
        const int q = qy * w_ + qx;
        for (int c = 0; c < 3; ++c) {
          const auto v_at = [&](int xx, int yy) { return val_[(yy * w_ + xx) * 3 + c]; };
          const double gx = diff(qx, qy, 1, 0, v_at);
          const double gy = diff(qx, qy, 0, 1, v_at);
          acc[c] += wgt * (val_[q * 3 + c] + gx * rx + gy * ry);
        }
        wsum += wgt;
      }
    }
    const int p = y * w_ + x;
    for (int c = 0; c < 3; ++c) {
      // A pixel always has its marching parent as a known 4-neighbour.
      val_[p * 3 + c] = wsum > 0 ? acc[c] / wsum : val_[p * 3 + c];
    }
  }

  int w_;
  int h_;
  int radius_;
  std::vector<std::uint8_t> flag_;
  std::vector<double> t_;
  std::vector<double> val_;
  // Min-heap on (arrival time, row-major index).
  std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>,
                      std::greater<>>
      heap_;
};

}  // namespace

RasterImage inpaint_fmm(const RasterImage& img, const RegionMask& mask, int radius) {
  if (radius < 1) {
    throw Error("inpaint_fmm: radius must be >= 1");
  }
  if (!check_inpaint_args(img, mask, "inpaint_fmm")) {
    return img;
  }
  const std::vector<double> filled = FastMarcher(img, mask, radius).run();
  RasterImage out = img;
  auto data = out.data();
  for (std::size_t i = 0; i < mask.bits().size(); ++i) {
    if (mask.bits()[i]) {
      for (std::size_t c = 0; c < 3; ++c) {
        data[i * 3 + c] = to_u8(filled[i * 3 + c]);
      }
    }
  }
  return out;
}

DiffusionResult inpaint_diffusion_detailed(const RasterImage& img, const RegionMask& mask,
                                           int iters) {
  DiffusionResult result;
  if (!check_inpaint_args(img, mask, "inpaint_diffusion")) {
    result.image = img;
    return result;
  }
  const int w = img.width();
  const int h = img.height();
  const auto& bits = mask.bits();
  const auto src = img.data();

  std::vector<int> holes;
  std::array<double, 3> mean{};
  std::size_t n_boundary = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      if (bits[p]) {
        holes.push_back(p);
        continue;
      }
      for (const auto& [dx, dy] : kNbr4) {
        if (mask.contains(x + dx, y + dy)) {
          for (int c = 0; c < 3; ++c) {
            mean[c] += src[p * 3 + c];
          }
          ++n_boundary;
          break;
        }
      }
    }
  }
  for (auto& m : mean) {
    m /= static_cast<double>(n_boundary);
  }

  std::vector<double> cur(src.begin(), src.end());
  for (const int p : holes) {
    for (int c = 0; c < 3; ++c) {
      cur[p * 3 + c] = mean[c];
    }
  }
  std::vector<double> next = cur;
  constexpr double kStop = 1e-4;
  for (int it = 0; it < iters; ++it) {
    double max_change = 0.0;
    for (const int p : holes) {
      const int x = p % w;
      const int y = p / w;
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        int n = 0;
        for (const auto& [dx, dy] : kNbr4) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx >= 0 && ny >= 0 && nx < w && ny < h) {
            sum += cur[(ny * w + nx) * 3 + c];
            ++n;
          }
        }
        const double v = sum / n;
        max_change = std::max(max_change, std::abs(v - cur[p * 3 + c]));
        next[p * 3 + c] = v;
      }
    }
    std::swap(cur, next);
    result.iterations = it + 1;
    result.last_max_change = max_change;
    if (max_change < kStop) {
      break;
    }
  }

  result.image = img;
  auto out = result.image.data();
  for (const int p : holes) {
    for (int c = 0; c < 3; ++c) {
      out[p * 3 + c] = to_u8(cur[p * 3 + c]);
    }
  }
  return result;
}

RasterImage inpaint_diffusion(const RasterImage& img, const RegionMask& mask, int iters) {
  return inpaint_diffusion_detailed(img, mask, iters).image;
}

}  // namespace orts
