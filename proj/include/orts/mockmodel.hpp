#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "orts/annotations.hpp"
#include "orts/protocol.hpp"

namespace orts {

/// Class count of every mock model and fixture set.
constexpr int kMockClasses = 20;

enum class MockKind { object_keyed, background_keyed, scripted };
std::string_view to_string(MockKind kind);
MockKind parse_mock_kind(std::string_view s);

enum class TexturePattern { vstripe, hstripe, checker };

/// Per-class fixture look: an object texture (pattern plus per-channel
/// sign) and a scene color for backgrounds tied to the class.
struct ClassPalette {
  TexturePattern pattern = TexturePattern::vstripe;
  std::array<int, 3> sign{};
  Rgb scene;
};
ClassPalette class_palette(CategoryId k);
/// Background color of fixtures whose scene carries no class evidence.
Rgb neutral_scene();
std::vector<std::string> mock_label_names();

/// 12-byte id stamp over the four corner pixels.
void write_watermark(RasterImage& img, std::uint32_t id);
std::optional<std::uint32_t> read_watermark(const RasterImage& img);

/// Normalized 729-bin histogram of ternary-quantized horizontal and vertical
/// neighbour differences over `core`.
std::vector<double> texture_signature(const RasterImage& img, const RegionMask& core);
/// Normalized 64-bin color histogram (4 levels per channel) over `core`.
std::vector<double> scene_histogram(const RasterImage& img, const RegionMask& core);
double total_variation(const std::vector<double>& a, const std::vector<double>& b);

struct MockParams {
  double tau = 10.0;
  double lambda = 0.15;
  double detect_threshold = 0.6;
  /// Max mean gradient mismatch accepted when the watermark is gone.
  double fingerprint_tolerance = 3.5;
};

/// Registered fixture images and the regions the mocks read from.
class MockRegistry {
 public:
  struct ObjectEntry {
    GroundTruthObject gt;
    RegionMask core;
  };
  struct Entry {
    std::uint32_t id = 0;
    std::string image_id;
    RasterImage source;
    RegionMask object_core;
    RegionMask background_core;
    std::vector<ObjectEntry> objects;
  };

  /// Reads every image of `dataset`; each must carry a watermark.
  static MockRegistry from_dataset(const Dataset& dataset);
  void add(const AnnotatedImage& image, const RasterImage& pixels);

  /// Watermark lookup, falling back to the closest object-gradient
  /// fingerprint. nullptr for images the registry does not know.
  const Entry* identify(const RasterImage& img, double fingerprint_tolerance) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

class MockModel {
 public:
  MockModel(MockKind kind, MockRegistry registry, MockParams params = {});

  MockKind kind() const { return kind_; }
  ClassificationOutcome classify(const RasterImage& img) const;
  DetectionOutcome detect(const RasterImage& img) const;
  /// Protocol callbacks: classify for the keyed kinds, detect for scripted.
  ModelBackend backend() const;

 private:
  MockKind kind_;
  MockRegistry registry_;
  MockParams params_;
  std::vector<std::vector<double>> texture_refs_;
};

// Fixture sets. Each writes PNGs plus fixture.json into `dir` and returns
// the dataset as loaded back from disk.

/// 20 single-object images, labels 10..19, class-colored scenes; two objects
/// are box-only.
Dataset make_relevancy_fixtures(const std::filesystem::path& dir, std::uint64_t seed = 1);
/// 8 images with one or two objects each on neutral scenes.
Dataset make_detection_fixtures(const std::filesystem::path& dir, std::uint64_t seed = 2);
/// 10 labels x 12 images, equal-size objects; the first 3 of each label
/// have class-colored scenes, the rest neutral scenes.
Dataset make_attack_fixtures(const std::filesystem::path& dir, std::uint64_t seed = 3);

}  // namespace orts
