#include "orts/mutation.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

namespace orts {

namespace {

constexpr std::array<MutationFunction, 6> kFunctions{{
    {MutationFunctionId::MvObjToImg, "MvObjToImg", MutationKind::preserving, 12},
    {MutationFunctionId::BldObjToImg, "BldObjToImg", MutationKind::preserving, 12},
    {MutationFunctionId::PsvObj, "PsvObj", MutationKind::preserving, 1},
    {MutationFunctionId::RmvObjByRGB, "RmvObjByRGB", MutationKind::removing, 9},
    {MutationFunctionId::RmvObjByTool, "RmvObjByTool", MutationKind::removing, 2},
    {MutationFunctionId::RmvObjByMM, "RmvObjByMM", MutationKind::removing, 2},
}};

constexpr std::array<NamedColor, 9> kColors{{
    {"black", {0, 0, 0}},
    {"white", {255, 255, 255}},
    {"red", {255, 0, 0}},
    {"green", {0, 255, 0}},
    {"blue", {0, 0, 255}},
    {"yellow", {255, 255, 0}},
    {"cyan", {0, 255, 255}},
    {"magenta", {255, 0, 255}},
    {"mid-gray", {128, 128, 128}},
}};

constexpr std::array<std::string_view, 2> kTools{"telea", "diffusion"};
constexpr std::array<std::string_view, 2> kStats{"mean", "median"};

// Procedural backgrounds stay inside [64, 191] per channel.
constexpr std::uint8_t kBgLo = 64;
constexpr std::uint8_t kBgHi = 191;

std::uint8_t bg_clamp(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), long{kBgLo}, long{kBgHi}));
}

Rgb lerp(Rgb a, Rgb b, double t) {
  return {bg_clamp(a.r + (b.r - a.r) * t), bg_clamp(a.g + (b.g - a.g) * t),
          bg_clamp(a.b + (b.b - a.b) * t)};
}

RasterImage make_background(int index, Dims dims) {
  RasterImage img(dims);
  const int w = dims.width;
  const int h = dims.height;
  const auto each = [&](auto fn) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        img.set_pixel(x, y, fn(x, y));
      }
    }
  };
  const auto noise = [&](Rgb base, std::uint32_t seed) {
    std::mt19937 rng(seed);
    each([&](int, int) {
      Rgb px;
      px.r = bg_clamp(base.r + static_cast<int>(rng() % 81) - 40);
      px.g = bg_clamp(base.g + static_cast<int>(rng() % 81) - 40);
      px.b = bg_clamp(base.b + static_cast<int>(rng() % 81) - 40);
      return px;
    });
  };
  switch (index) {
    case 0: each([](int, int) { return Rgb{80, 140, 180}; }); break;
    case 1: each([](int, int) { return Rgb{180, 160, 90}; }); break;
    case 2: each([](int, int) { return Rgb{100, 170, 100}; }); break;
    case 3: each([](int, int) { return Rgb{170, 100, 150}; }); break;
    case 4:
      each([&](int x, int) { return lerp({70, 70, 150}, {185, 185, 150}, x / double(w - 1)); });
      break;
    case 5:
      each([&](int, int y) { return lerp({150, 70, 70}, {150, 185, 185}, y / double(h - 1)); });
      break;
    case 6:
      each([&](int x, int y) {
        return lerp({70, 150, 70}, {185, 100, 180}, (x + y) / double(w + h - 2));
      });
      break;
    case 7: noise({120, 120, 150}, 7); break;
    case 8: noise({150, 140, 100}, 8); break;
    case 9:
      each([](int x, int) { return (x / 16) % 2 ? Rgb{70, 110, 160} : Rgb{180, 180, 120}; });
      break;
    case 10:
      each([](int, int y) { return (y / 16) % 2 ? Rgb{180, 120, 80} : Rgb{90, 160, 180}; });
      break;
    case 11:
      each([](int x, int y) {
        return ((x / 16) + (y / 16)) % 2 ? Rgb{110, 170, 140} : Rgb{170, 110, 140};
      });
      break;
    default: throw Error("no procedural background " + std::to_string(index));
  }
  return img;
}

std::string two_digit(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%02zu", i);
  return buf;
}

bool margin_nonempty(const MutationTarget& t) {
  const BoundingBox b = t.bbox.clamped(t.region.dims());
  for (int y = b.y; y < b.bottom(); ++y) {
    for (int x = b.x; x < b.right(); ++x) {
      if (!t.region.test(x, y)) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace

const std::array<MutationFunction, 6>& mutation_functions() { return kFunctions; }

const MutationFunction& mutation_function(MutationFunctionId id) {
  return kFunctions[static_cast<std::size_t>(id)];
}

std::string_view to_string(MutationKind kind) {
  return kind == MutationKind::preserving ? "preserving" : "removing";
}

const std::array<NamedColor, 9>& fill_colors() { return kColors; }

BackgroundLibrary BackgroundLibrary::procedural(Dims dims) {
  BackgroundLibrary lib;
  for (std::size_t i = 0; i < kSize; ++i) {
    lib.images_.push_back(make_background(static_cast<int>(i), dims));
    lib.ids_.push_back("bg" + two_digit(i));
  }
  return lib;
}

BackgroundLibrary BackgroundLibrary::from_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error("background directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") {
      files.push_back(e.path());
    }
  }
  if (files.size() != kSize) {
    throw Error("background directory must hold exactly 12 PNG files, found " +
                std::to_string(files.size()));
  }
  std::sort(files.begin(), files.end());
  BackgroundLibrary lib;
  for (const auto& f : files) {
    lib.images_.push_back(read_png(f));
    lib.ids_.push_back(f.stem().string());
  }
  return lib;
}

MutationCatalog::MutationCatalog(BackgroundLibrary backgrounds, ImagingParams params)
    : backgrounds_(std::move(backgrounds)), params_(params) {
  if (backgrounds_.size() != BackgroundLibrary::kSize) {
    throw Error("background library must hold exactly 12 images");
  }
  for (const auto& fn : kFunctions) {
    for (int i = 0; i < fn.op_count; ++i) {
      std::string suffix;
      switch (fn.id) {
        case MutationFunctionId::MvObjToImg:
        case MutationFunctionId::BldObjToImg: suffix = "bg" + two_digit(i); break;
        case MutationFunctionId::PsvObj: suffix = "gray"; break;
        case MutationFunctionId::RmvObjByRGB: suffix = kColors[i].name; break;
        case MutationFunctionId::RmvObjByTool: suffix = kTools[i]; break;
        case MutationFunctionId::RmvObjByMM: suffix = kStats[i]; break;
      }
      ops_.push_back({fn.id, i, std::string(fn.name) + "/" + suffix});
    }
  }
}

const MutationOperation* MutationCatalog::find(std::string_view operation_id) const {
  for (const auto& op : ops_) {
    if (op.operation_id == operation_id) {
      return &op;
    }
  }
  return nullptr;
}

bool MutationCatalog::applicable(const MutationOperation& op, const MutationTarget& target) const {
  if (op.function != MutationFunctionId::RmvObjByMM) {
    return true;
  }
  return target.has_mask && margin_nonempty(target);
}

MutationResult MutationCatalog::apply(const MutationOperation& op, const RasterImage& src,
                                      const MutationTarget& target) const {
  if (src.width() < 16 || src.height() < 16) {
    throw MutationError(op.operation_id, "source image smaller than 16x16");
  }
  if (target.region.dims() != src.dims()) {
    throw MutationError(op.operation_id, "region dimensions differ from the image");
  }
  if (!target.region.any()) {
    throw MutationError(op.operation_id, "empty object region");
  }
  if (op.function == MutationFunctionId::RmvObjByMM && !target.has_mask) {
    return Inapplicable{"no segmentation mask"};
  }
  try {
    if (op.function == MutationFunctionId::RmvObjByMM) {
      const auto stats = margin_stats(src, target.region, target.bbox);
      if (!stats) {
        return Inapplicable{"empty margin between mask and bbox"};
      }
      return fill_region(src, target.region, op.ingredient == 0 ? stats->mean : stats->median);
    }
    return apply_unchecked(op, src, target);
  } catch (const MutationError&) {
    throw;
  } catch (const Error& e) {
    throw MutationError(op.operation_id, e.what());
  }
}

RasterImage MutationCatalog::apply_unchecked(const MutationOperation& op, const RasterImage& src,
                                             const MutationTarget& target) const {
  const RegionMask& region = target.region;
  const auto blur_band = [&](const RasterImage& img) {
    return median_filter(img, boundary_band(region, params_.band_width), params_.median_kernel);
  };
  const auto background = [&] {
    return resize(backgrounds_.image(static_cast<std::size_t>(op.ingredient)), src.dims());
  };
  switch (op.function) {
    case MutationFunctionId::MvObjToImg:
      return blur_band(composite(src, region, background()));
    case MutationFunctionId::BldObjToImg: {
      const RasterImage bg = background();
      // The solver needs Dirichlet values on all sides; object pixels on the
      // image frame take the background instead.
      RegionMask inner = region;
      for (int y = 0; y < inner.height(); ++y) {
        for (int x = 0; x < inner.width(); ++x) {
          if (x == 0 || y == 0 || x == inner.width() - 1 || y == inner.height() - 1) {
            inner.set(x, y, false);
          }
        }
      }
      if (!inner.any()) {
        return bg;
      }
      const auto cap = static_cast<std::size_t>(params_.poisson_max_iters);
      const auto iters =
          std::min(cap, inner.popcount() * static_cast<std::size_t>(params_.poisson_iters_per_pixel));
      return poisson_blend(src, inner, bg, params_.poisson_tol, static_cast<int>(iters)).image;
    }
    case MutationFunctionId::PsvObj:
      return blur_band(gray_fill(src, region.complement(), params_.gray));
    case MutationFunctionId::RmvObjByRGB:
      return blur_band(fill_region(src, region, kColors[static_cast<std::size_t>(op.ingredient)].rgb));
    case MutationFunctionId::RmvObjByTool:
      return op.ingredient == 0 ? inpaint_fmm(src, region, params_.fmm_radius)
                                : inpaint_diffusion(src, region, params_.diffusion_iters);
    case MutationFunctionId::RmvObjByMM: break;
  }
  throw Error("unreachable mutation function");
}

std::vector<WeightedOperation> MutationCatalog::enumerate(MutationKind kind,
                                                          const MutationTarget& target) const {
  std::vector<std::vector<const MutationOperation*>> per_function;
  for (const auto& fn : kFunctions) {
    if (fn.kind != kind) {
      continue;
    }
    std::vector<const MutationOperation*> ops;
    for (const auto& op : ops_) {
      if (op.function == fn.id && applicable(op, target)) {
        ops.push_back(&op);
      }
    }
    if (!ops.empty()) {
      per_function.push_back(std::move(ops));
    }
  }
  if (per_function.empty()) {
    throw Error(std::string("no applicable ") + std::string(to_string(kind)) + " operation");
  }
  const std::uint64_t n = per_function.size();
  std::vector<WeightedOperation> out;
  for (const auto& ops : per_function) {
    const std::uint64_t h = static_cast<std::uint64_t>(mutation_function(ops.front()->function).op_count);
    for (const auto* op : ops) {
      out.push_back({op, 1.0 / static_cast<double>(h * n), h * n});
    }
  }
  return out;
}

}  // namespace orts
