#pragma once

#include <optional>
#include <vector>

#include "orts/geometry.hpp"
#include "orts/raster.hpp"

namespace orts {

/// Tunables for the raster primitives. Defaults are the fixed values used by
/// the mutation catalog; the harness config can override them.
struct ImagingParams {
  int band_width = 3;          // boundary band half-width, pixels
  int median_kernel = 5;       // odd side length
  double poisson_tol = 1e-3;   // mean absolute residual, intensity levels
  int poisson_iters_per_pixel = 10;
  int poisson_max_iters = 200'000;
  int fmm_radius = 5;
  int diffusion_iters = 2000;
  Rgb gray{128, 128, 128};
};

/// Pixels within Chebyshev distance `d` of a pixel of the opposite class,
/// on both sides of the mask boundary. Off-image pixels belong to neither side.
RegionMask boundary_band(const RegionMask& mask, int d);

/// Per-channel median over a kernel x kernel clamped neighbourhood, applied
/// only to pixels inside `band`. Throws on even or < 3 kernels.
RasterImage median_filter(const RasterImage& img, const RegionMask& band, int kernel);

/// Per-pixel select: `object_src` where mask is set, else `background`.
RasterImage composite(const RasterImage& object_src, const RegionMask& mask,
                      const RasterImage& background);

struct PoissonResult {
  RasterImage image;
  /// Unrounded solution, w*h*3 doubles; equals the background outside the mask.
  std::vector<double> field;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

/// Gradient-domain blend of `object_src` into `background` over `mask`
/// (Gauss-Seidel on the 4-neighbour discrete Poisson equation with
/// Dirichlet values from the background). The mask must not touch the image
/// border. Non-convergence is reported through `converged`, not thrown.
PoissonResult poisson_blend(const RasterImage& object_src, const RegionMask& mask,
                            const RasterImage& background, double tol, int max_iters);

/// Telea-style fast-marching inpainting over `mask`.
RasterImage inpaint_fmm(const RasterImage& img, const RegionMask& mask, int radius);

struct DiffusionResult {
  RasterImage image;
  int iterations = 0;
  double last_max_change = 0.0;
};

/// Harmonic fill by repeated 4-neighbour averaging of masked pixels.
DiffusionResult inpaint_diffusion_detailed(const RasterImage& img, const RegionMask& mask,
                                           int iters);
RasterImage inpaint_diffusion(const RasterImage& img, const RegionMask& mask, int iters);

RasterImage fill_region(const RasterImage& img, const RegionMask& mask, Rgb color);

struct MarginStats {
  Rgb mean;
  Rgb median;
};

/// Mean (half-up) and lower median over pixels inside `bbox` but outside
/// `mask`. nullopt when that margin is empty.
std::optional<MarginStats> margin_stats(const RasterImage& img, const RegionMask& mask,
                                        const BoundingBox& bbox);

/// Bilinear resize with pixel-centre alignment.
RasterImage resize(const RasterImage& img, Dims new_dims);

/// Sets every pixel of `region` to `gray`.
RasterImage gray_fill(const RasterImage& img, const RegionMask& region, Rgb gray = {128, 128, 128});

}  // namespace orts
