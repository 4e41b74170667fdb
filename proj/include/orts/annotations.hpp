#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "orts/geometry.hpp"

namespace orts {

using CategoryId = int;
using ObjectId = std::uint64_t;

/// Parse failure with the byte offset where the input stopped making sense.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Contiguous category ids 0..n-1, bijective with names.
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::string& name(CategoryId id) const;
  std::optional<CategoryId> find(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }

  friend bool operator==(const LabelMap& a, const LabelMap& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, CategoryId> index_;
};

struct GroundTruthObject {
  CategoryId label = 0;
  BoundingBox bbox;
  std::optional<RegionMask> mask;
  ObjectId object_id = 0;

  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

struct AnnotatedImage {
  std::string image_id;
  std::filesystem::path path;
  int width = 0;
  int height = 0;
  std::vector<GroundTruthObject> objects;

  Dims dims() const { return {width, height}; }
  std::set<CategoryId> labels() const;
  const GroundTruthObject* find_object(ObjectId id) const;

  friend bool operator==(const AnnotatedImage&, const AnnotatedImage&) = default;
};

/// A problem found while loading. Record-level issues drop one annotation;
/// file-level issues drop a whole image.
struct LoadIssue {
  enum class Level { record, file };
  Level level = Level::record;
  std::string source;
  std::string message;
};

struct Dataset {
  LabelMap labels;
  std::vector<AnnotatedImage> images;
  std::vector<LoadIssue> issues;

  const AnnotatedImage* find_image(const std::string& image_id) const;
};

/// COCO instances JSON. Category ids are remapped to contiguous ids in
/// ascending COCO-id order. Polygon and RLE segmentations are rasterized.
Dataset load_coco(const std::filesystem::path& annotation_file,
                  const std::filesystem::path& image_root);
Dataset parse_coco(const std::string& json_text, const std::filesystem::path& image_root,
                   const std::string& source_name = "<memory>");

/// Directory of Pascal VOC XML files. When `label_names` is empty the label
/// map is the sorted set of object names found across all files.
Dataset load_voc(const std::filesystem::path& annotation_dir,
                 const std::filesystem::path& image_root,
                 const std::vector<std::string>& label_names = {});

/// The project's own fixture format: one JSON document, explicit masks as
/// nested 0/1 row arrays. Image paths are resolved relative to the document.
Dataset load_fixture(const std::filesystem::path& file);
Dataset parse_fixture(const std::string& json_text, const std::filesystem::path& base_dir);
std::string serialize_fixture(const Dataset& dataset, const std::filesystem::path& base_dir = {});
void save_fixture(const Dataset& dataset, const std::filesystem::path& file);

/// Even-odd fill sampled at pixel centers.
RegionMask rasterize_polygon(const std::vector<double>& xy, Dims dims);

/// COCO RLE (column-major). Accepts the uncompressed counts list and the
/// compressed string form.
RegionMask decode_coco_rle(const std::vector<std::uint32_t>& counts, Dims dims);
RegionMask decode_coco_rle(const std::string& compressed, Dims dims);

/// Object region: the mask if present, else the filled bbox rectangle.
RegionMask rasterize_region(const GroundTruthObject& obj, Dims dims);

/// Loads a dataset from "<fmt>:<path>" where fmt is coco, voc, or fixture.
Dataset load_dataset_spec(const std::string& spec,
                          const std::optional<std::filesystem::path>& image_root = std::nullopt);

}  // namespace orts
