#include "orts/mockmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "orts/imaging.hpp"

namespace orts {

namespace {

constexpr int kCoreErosion = 4;
constexpr int kTextureAmplitude = 24;
constexpr int kPixelNoise = 6;  // uniform in [-6, 6]
constexpr int kDiffThreshold = 24;
constexpr std::array<std::uint8_t, 4> kMagic{'O', 'R', 'T', 'S'};
constexpr std::array<int, 4> kSceneLevels{24, 96, 160, 232};

std::vector<std::array<int, 3>> canonical_signs() {
  std::vector<std::array<int, 3>> out;
  for (int a = -1; a <= 1; ++a) {
    for (int b = -1; b <= 1; ++b) {
      for (int c = -1; c <= 1; ++c) {
        const int first = a != 0 ? a : (b != 0 ? b : c);
        if (first > 0) {
          out.push_back({a, b, c});
        }
      }
    }
  }
  return out;
}

std::vector<std::array<int, 3>> scene_bins() {
  std::vector<std::array<int, 3>> out;
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      for (int c = 0; c < 4; ++c) {
        const auto extreme = [](int v) { return v == 0 || v == 3; };
        if (extreme(a) || extreme(b) || extreme(c)) {
          out.push_back({a, b, c});
        }
      }
    }
  }
  return out;
}

int phase(TexturePattern p, int x, int y) {
  switch (p) {
    case TexturePattern::vstripe: return x % 2 ? 1 : -1;
    case TexturePattern::hstripe: return y % 2 ? 1 : -1;
    case TexturePattern::checker: return (x + y) % 2 ? 1 : -1;
  }
  return 1;
}

int quantize(int d) { return d > kDiffThreshold ? 2 : (d < -kDiffThreshold ? 0 : 1); }

int scene_bin(Rgb c) { return (c.r >> 6) * 16 + (c.g >> 6) * 4 + (c.b >> 6); }

std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

int noise(std::mt19937_64& rng) {
  return static_cast<int>(rng() % (2 * kPixelNoise + 1)) - kPixelNoise;
}

Rgb texture_pixel(const ClassPalette& pal, int x, int y, std::mt19937_64& rng) {
  const int ph = phase(pal.pattern, x, y);
  std::array<std::uint8_t, 3> v{};
  for (int c = 0; c < 3; ++c) {
    v[c] = clamp_u8(128 + pal.sign[c] * kTextureAmplitude * ph + noise(rng));
  }
  return {v[0], v[1], v[2]};
}

// Horizontal and vertical differences of all channels over `core`, in a
// fixed order; used for fingerprints and gradient correlation.
std::vector<int> core_gradients(const RasterImage& img, const RegionMask& core) {
  std::vector<int> out;
  for (int y = 0; y + 1 < img.height(); ++y) {
    for (int x = 0; x + 1 < img.width(); ++x) {
      if (!core.test(x, y)) {
        continue;
      }
      for (int c = 0; c < 3; ++c) {
        out.push_back(img.at(x + 1, y, c) - img.at(x, y, c));
        out.push_back(img.at(x, y + 1, c) - img.at(x, y, c));
      }
    }
  }
  return out;
}

double correlation(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) {
    return 0.0;
  }
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) {
    return 0.0;
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) {
    v /= sum;
  }
  return out;
}

RegionMask corners(Dims d) {
  RegionMask m(d);
  m.set(0, 0);
  m.set(d.width - 1, 0);
  m.set(0, d.height - 1);
  m.set(d.width - 1, d.height - 1);
  return m;
}

RegionMask minus(const RegionMask& a, const RegionMask& b) { return a & b.complement(); }

std::vector<double> reference_signature(CategoryId k) {
  const ClassPalette pal = class_palette(k);
  RasterImage patch(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const int ph = phase(pal.pattern, x, y);
      Rgb px;
      px.r = clamp_u8(128 + pal.sign[0] * kTextureAmplitude * ph);
      px.g = clamp_u8(128 + pal.sign[1] * kTextureAmplitude * ph);
      px.b = clamp_u8(128 + pal.sign[2] * kTextureAmplitude * ph);
      patch.set_pixel(x, y, px);
    }
  }
  RegionMask all(16, 16);
  std::fill(all.bits().begin(), all.bits().end(), 1);
  return texture_signature(patch, all);
}

// ---- fixture rendering -----------------------------------------------------

struct FixtureObject {
  CategoryId label;
  RegionMask region;
  bool has_mask;
};

RegionMask ellipse(Dims d, int cx, int cy, int rx, int ry) {
  RegionMask m(d);
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const double u = (x - cx) / (rx + 0.5);
      const double v = (y - cy) / (ry + 0.5);
      if (u * u + v * v <= 1.0) {
        m.set(x, y);
      }
    }
  }
  return m;
}

AnnotatedImage render_fixture(const std::filesystem::path& dir, const std::string& image_id,
                              std::uint32_t watermark, Dims dims, Rgb scene,
                              const std::vector<FixtureObject>& objects, std::mt19937_64& rng) {
  RasterImage img(dims);
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      img.set_pixel(x, y,
                    {clamp_u8(scene.r + noise(rng)), clamp_u8(scene.g + noise(rng)),
                     clamp_u8(scene.b + noise(rng))});
    }
  }
  AnnotatedImage ann;
  ann.image_id = image_id;
  ann.path = dir / (image_id + ".png");
  ann.width = dims.width;
  ann.height = dims.height;
  ObjectId next_id = 0;
  for (const auto& obj : objects) {
    const ClassPalette pal = class_palette(obj.label);
    for (int y = 0; y < dims.height; ++y) {
      for (int x = 0; x < dims.width; ++x) {
        if (obj.region.test(x, y)) {
          img.set_pixel(x, y, texture_pixel(pal, x, y, rng));
        }
      }
    }
    GroundTruthObject gt;
    gt.label = obj.label;
    gt.bbox = *obj.region.tight_bbox();
    if (obj.has_mask) {
      gt.mask = obj.region;
    }
    gt.object_id = next_id++;
    ann.objects.push_back(std::move(gt));
  }
  write_watermark(img, watermark);
  write_png(img, ann.path);
  return ann;
}

Dataset finish_fixture_set(const std::filesystem::path& dir, std::vector<AnnotatedImage> images) {
  Dataset ds;
  ds.labels = LabelMap(mock_label_names());
  ds.images = std::move(images);
  const auto file = dir / "fixture.json";
  save_fixture(ds, file);
  return load_fixture(file);
}

int pick(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

}  // namespace

std::string_view to_string(MockKind kind) {
  switch (kind) {
    case MockKind::object_keyed: return "object-keyed";
    case MockKind::background_keyed: return "background-keyed";
    case MockKind::scripted: return "scripted";
  }
  return "?";
}

MockKind parse_mock_kind(std::string_view s) {
  if (s == "object-keyed") {
    return MockKind::object_keyed;
  }
  if (s == "background-keyed") {
    return MockKind::background_keyed;
  }
  if (s == "scripted") {
    return MockKind::scripted;
  }
  throw Error("unknown mock kind '" + std::string(s) + "'");
}

ClassPalette class_palette(CategoryId k) {
  if (k < 0 || k >= kMockClasses) {
    throw Error("class_palette: class " + std::to_string(k) + " out of range");
  }
  static const auto signs = canonical_signs();
  static const auto bins = scene_bins();
  ClassPalette pal;
  pal.pattern = static_cast<TexturePattern>(k % 3);
  pal.sign = signs[static_cast<std::size_t>(k / 3)];
  const auto& b = bins[static_cast<std::size_t>(k * 11) % bins.size()];
  pal.scene = {static_cast<std::uint8_t>(kSceneLevels[b[0]]),
               static_cast<std::uint8_t>(kSceneLevels[b[1]]),
               static_cast<std::uint8_t>(kSceneLevels[b[2]])};
  return pal;
}

Rgb neutral_scene() { return {96, 96, 160}; }

std::vector<std::string> mock_label_names() {
  std::vector<std::string> names;
  for (int k = 0; k < kMockClasses; ++k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%02d", k);
    names.emplace_back(buf);
  }
  return names;
}

void write_watermark(RasterImage& img, std::uint32_t id) {
  std::array<std::uint8_t, 12> bytes{};
  std::copy(kMagic.begin(), kMagic.end(), bytes.begin());
  for (int i = 0; i < 4; ++i) {
    bytes[4 + i] = static_cast<std::uint8_t>(id >> (8 * i));
    bytes[8 + i] = static_cast<std::uint8_t>(~id >> (8 * i));
  }
  const int w = img.width();
  const int h = img.height();
  const std::array<std::array<int, 2>, 4> at{{{0, 0}, {w - 1, 0}, {0, h - 1}, {w - 1, h - 1}}};
  for (std::size_t k = 0; k < 4; ++k) {
    img.set_pixel(at[k][0], at[k][1], {bytes[3 * k], bytes[3 * k + 1], bytes[3 * k + 2]});
  }
}

std::optional<std::uint32_t> read_watermark(const RasterImage& img) {
  if (img.width() < 2 || img.height() < 2) {
    return std::nullopt;
  }
  const int w = img.width();
  const int h = img.height();
  const std::array<std::array<int, 2>, 4> at{{{0, 0}, {w - 1, 0}, {0, h - 1}, {w - 1, h - 1}}};
  std::array<std::uint8_t, 12> bytes{};
  for (std::size_t k = 0; k < 4; ++k) {
    const Rgb px = img.pixel(at[k][0], at[k][1]);
    bytes[3 * k] = px.r;
    bytes[3 * k + 1] = px.g;
    bytes[3 * k + 2] = px.b;
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    return std::nullopt;
  }
  std::uint32_t id = 0;
  std::uint32_t inv = 0;
  for (int i = 0; i < 4; ++i) {
    id |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
    inv |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
  }
  if (inv != ~id) {
    return std::nullopt;
  }
  return id;
}

std::vector<double> texture_signature(const RasterImage& img, const RegionMask& core) {
  std::vector<double> hist(27 * 27, 0.0);
  std::size_t n = 0;
  for (int y = 0; y + 1 < img.height(); ++y) {
    for (int x = 0; x + 1 < img.width(); ++x) {
      if (!core.test(x, y)) {
        continue;
      }
      int qh = 0;
      int qv = 0;
      for (int c = 0; c < 3; ++c) {
        qh = qh * 3 + quantize(img.at(x + 1, y, c) - img.at(x, y, c));
        qv = qv * 3 + quantize(img.at(x, y + 1, c) - img.at(x, y, c));
      }
      hist[static_cast<std::size_t>(qh * 27 + qv)] += 1.0;
      ++n;
    }
  }
  if (n > 0) {
    for (auto& v : hist) {
      v /= static_cast<double>(n);
    }
  }
  return hist;
}

std::vector<double> scene_histogram(const RasterImage& img, const RegionMask& core) {
  std::vector<double> hist(64, 0.0);
  std::size_t n = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (core.test(x, y)) {
        hist[static_cast<std::size_t>(scene_bin(img.pixel(x, y)))] += 1.0;
        ++n;
      }
    }
  }
  if (n > 0) {
    for (auto& v : hist) {
      v /= static_cast<double>(n);
    }
  }
  return hist;
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw Error("total_variation: size mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += std::abs(a[i] - b[i]);
  }
  return 0.5 * s;
}

MockRegistry MockRegistry::from_dataset(const Dataset& dataset) {
  MockRegistry reg;
  for (const auto& img : dataset.images) {
    reg.add(img, read_png(img.path));
  }
  return reg;
}

void MockRegistry::add(const AnnotatedImage& image, const RasterImage& pixels) {
  const auto id = read_watermark(pixels);
  if (!id) {
    throw Error("fixture image " + image.image_id + " carries no watermark");
  }
  if (pixels.dims() != image.dims()) {
    throw Error("fixture image " + image.image_id + " does not match its annotation size");
  }
  Entry e;
  e.id = *id;
  e.image_id = image.image_id;
  e.source = pixels;
  const RegionMask frame = corners(pixels.dims());
  RegionMask all_objects(pixels.dims());
  e.object_core = RegionMask(pixels.dims());
  for (const auto& obj : image.objects) {
    const RegionMask region = rasterize_region(obj, pixels.dims());
    const RegionMask core = minus(region.erode(kCoreErosion, true), frame);
    all_objects = all_objects | region;
    e.object_core = e.object_core | core;
    e.objects.push_back({obj, core});
  }
  e.background_core = minus(all_objects.dilate(kCoreErosion).complement(), frame);
  entries_.push_back(std::move(e));
}

const MockRegistry::Entry* MockRegistry::identify(const RasterImage& img,
                                                  double fingerprint_tolerance) const {
  if (const auto id = read_watermark(img)) {
    for (const auto& e : entries_) {
      if (e.id == *id && e.source.dims() == img.dims()) {
        return &e;
      }
    }
  }
  const Entry* best = nullptr;
  double best_score = std::numeric_limits<double>::infinity();
  for (const auto& e : entries_) {
    if (e.source.dims() != img.dims()) {
      continue;
    }
    // Best single object: one surviving object is enough to recognize the image.
    double s = std::numeric_limits<double>::infinity();
    const auto mismatch = [&](const RegionMask& core) {
      const auto a = core_gradients(img, core);
      const auto b = core_gradients(e.source, core);
      if (a.empty()) {
        return;
      }
      double sum = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        sum += std::abs(a[i] - b[i]);
      }
      s = std::min(s, sum / static_cast<double>(a.size()));
    };
    if (e.objects.empty()) {
      mismatch(e.object_core);
    }
    for (const auto& obj : e.objects) {
      mismatch(obj.core);
    }
    if (s < best_score) {
      best_score = s;
      best = &e;
    }
  }
  return best_score <= fingerprint_tolerance ? best : nullptr;
}

MockModel::MockModel(MockKind kind, MockRegistry registry, MockParams params)
    : kind_(kind), registry_(std::move(registry)), params_(params) {
  for (int k = 0; k < kMockClasses; ++k) {
    texture_refs_.push_back(reference_signature(k));
  }
}

ClassificationOutcome MockModel::classify(const RasterImage& img) const {
  if (kind_ == MockKind::scripted) {
    throw CapabilityError("scripted mock does not classify");
  }
  const auto* e = registry_.identify(img, params_.fingerprint_tolerance);
  if (!e) {
    return {std::vector<double>(kMockClasses, 1.0 / kMockClasses)};
  }
  const auto sig = texture_signature(img, e->object_core);
  std::vector<double> scene;
  if (kind_ == MockKind::background_keyed) {
    scene = scene_histogram(img, e->background_core);
  }
  std::vector<double> logits(kMockClasses);
  for (int k = 0; k < kMockClasses; ++k) {
    const double d_obj = total_variation(sig, texture_refs_[static_cast<std::size_t>(k)]);
    if (kind_ == MockKind::object_keyed) {
      logits[k] = -params_.tau * d_obj;
    } else {
      const double d_bg = 1.0 - scene[static_cast<std::size_t>(scene_bin(class_palette(k).scene))];
      logits[k] = -params_.tau * (d_bg + params_.lambda * d_obj);
    }
  }
  return {softmax(logits)};
}

DetectionOutcome MockModel::detect(const RasterImage& img) const {
  if (kind_ != MockKind::scripted) {
    throw CapabilityError("only the scripted mock detects");
  }
  DetectionOutcome out;
  const auto* e = registry_.identify(img, params_.fingerprint_tolerance);
  if (!e) {
    return out;
  }
  for (const auto& obj : e->objects) {
    const double ncc =
        correlation(core_gradients(img, obj.core), core_gradients(e->source, obj.core));
    if (ncc >= params_.detect_threshold) {
      DetectionRecord r;
      r.label = obj.gt.label;
      r.bbox = obj.gt.bbox;
      r.confidence = std::clamp(ncc, 0.0, 1.0);
      r.mask = obj.gt.mask;
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

ModelBackend MockModel::backend() const {
  ModelBackend b;
  b.handshake.num_classes = kMockClasses;
  b.handshake.labels = mock_label_names();
  b.handshake.model_name = "mock-" + std::string(to_string(kind_));
  if (kind_ == MockKind::scripted) {
    b.detect = [this](const RasterImage& img) { return detect(img); };
  } else {
    b.classify = [this](const RasterImage& img) { return classify(img); };
  }
  return b;
}

Dataset make_relevancy_fixtures(const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::vector<AnnotatedImage> images;
  for (int i = 0; i < 20; ++i) {
    const CategoryId label = 10 + i / 2;
    const Dims dims{96 + 16 * (i % 3), 96 + 16 * ((i / 3) % 2)};
    const int rx = pick(rng, 16, 23);
    const int ry = pick(rng, 16, 23);
    const int cx = pick(rng, rx + 12, dims.width - rx - 13);
    const int cy = pick(rng, ry + 12, dims.height - ry - 13);
    FixtureObject obj{label, {}, i % 7 != 3};
    if (obj.has_mask) {
      obj.region = ellipse(dims, cx, cy, rx, ry);
    } else {
      obj.region = RegionMask::from_box(dims, {cx - rx, cy - ry, 2 * rx + 1, 2 * ry + 1});
    }
    char id[16];
    std::snprintf(id, sizeof id, "rel%02d", i);
    images.push_back(render_fixture(dir, id, 1000 + static_cast<std::uint32_t>(i), dims,
                                    class_palette(label).scene, {obj}, rng));
  }
  return finish_fixture_set(dir, std::move(images));
}

Dataset make_detection_fixtures(const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::vector<AnnotatedImage> images;
  const Dims dims{128, 96};
  for (int i = 0; i < 8; ++i) {
    std::vector<FixtureObject> objects;
    const CategoryId first = 10 + static_cast<int>(rng() % 10);
    const int n = i % 2 == 0 ? 2 : 1;
    for (int k = 0; k < n; ++k) {
      // Image 0 repeats the label so one image yields two same-label records.
      const CategoryId label = k == 0 || i == 0 ? first : 10 + static_cast<int>(rng() % 10);
      const int rx = pick(rng, 12, 17);
      const int ry = pick(rng, 12, 17);
      const int x0 = k == 0 ? 12 : 68;
      const int cx = pick(rng, x0 + rx, x0 + 48 - rx);
      const int cy = pick(rng, ry + 12, dims.height - ry - 13);
      objects.push_back({label, ellipse(dims, cx, cy, rx, ry), true});
    }
    char id[16];
    std::snprintf(id, sizeof id, "det%02d", i);
    images.push_back(render_fixture(dir, id, 2000 + static_cast<std::uint32_t>(i), dims,
                                    neutral_scene(), objects, rng));
  }
  return finish_fixture_set(dir, std::move(images));
}

Dataset make_attack_fixtures(const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::vector<AnnotatedImage> images;
  const Dims dims{96, 96};
  constexpr int r = 18;
  std::uint32_t serial = 3000;
  for (CategoryId label = 10; label < 20; ++label) {
    for (int j = 0; j < 12; ++j) {
      const int cx = pick(rng, 26, 70);
      const int cy = pick(rng, 26, 70);
      const Rgb scene = j < 3 ? class_palette(label).scene : neutral_scene();
      char id[24];
      std::snprintf(id, sizeof id, "atk%02d_%02d", label, j);
      images.push_back(render_fixture(dir, id, serial++, dims, scene,
                                      {{label, ellipse(dims, cx, cy, r, r), true}}, rng));
    }
  }
  return finish_fixture_set(dir, std::move(images));
}

}  // namespace orts
