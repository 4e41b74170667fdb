#include "orts/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace orts {

using nlohmann::json;

LabelMap::LabelMap(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], static_cast<CategoryId>(i)).second) {
      throw Error("LabelMap: duplicate label name '" + names_[i] + "'");
    }
  }
}

const std::string& LabelMap::name(CategoryId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
    throw Error("LabelMap: category id " + std::to_string(id) + " out of range");
  }
  return names_[static_cast<std::size_t>(id)];
}

std::optional<CategoryId> LabelMap::find(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::set<CategoryId> AnnotatedImage::labels() const {
  std::set<CategoryId> out;
  for (const auto& o : objects) {
    out.insert(o.label);
  }
  return out;
}

const GroundTruthObject* AnnotatedImage::find_object(ObjectId id) const {
  for (const auto& o : objects) {
    if (o.object_id == id) {
      return &o;
    }
  }
  return nullptr;
}

const AnnotatedImage* Dataset::find_image(const std::string& image_id) const {
  for (const auto& img : images) {
    if (img.image_id == image_id) {
      return &img;
    }
  }
  return nullptr;
}

RegionMask rasterize_polygon(const std::vector<double>& xy, Dims dims) {
  RegionMask mask(dims);
  const std::size_t n = xy.size() / 2;
  if (n < 3) {
    return mask;
  }
  std::vector<double> crossings;
  for (int y = 0; y < dims.height; ++y) {
    const double yc = y + 0.5;
    crossings.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const double x1 = xy[2 * i], y1 = xy[2 * i + 1];
      const double x2 = xy[2 * ((i + 1) % n)], y2 = xy[2 * ((i + 1) % n) + 1];
      if ((y1 <= yc) != (y2 <= yc)) {
        crossings.push_back(x1 + (yc - y1) * (x2 - x1) / (y2 - y1));
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      // Centers xc with crossings[k] <= xc < crossings[k+1].
      const int first = std::max(0, static_cast<int>(std::ceil(crossings[k] - 0.5)));
      const int last = std::min(dims.width - 1, static_cast<int>(std::ceil(crossings[k + 1] - 0.5)) - 1);
      for (int x = first; x <= last; ++x) {
        mask.set(x, y);
      }
    }
  }
  return mask;
}

RegionMask decode_coco_rle(const std::vector<std::uint32_t>& counts, Dims dims) {
  RegionMask mask(dims);
  const std::size_t total = static_cast<std::size_t>(dims.width) * dims.height;
  std::size_t pos = 0;
  bool value = false;
  for (const auto c : counts) {
    if (pos + c > total) {
      throw Error("RLE counts exceed mask size");
    }
    if (value) {
      for (std::size_t i = pos; i < pos + c; ++i) {
        // column-major: i = x * h + y
        mask.set(static_cast<int>(i / dims.height), static_cast<int>(i % dims.height));
      }
    }
    pos += c;
    value = !value;
  }
  if (pos != total) {
    throw Error("RLE counts cover " + std::to_string(pos) + " of " + std::to_string(total) +
                " pixels");
  }
  return mask;
}

RegionMask decode_coco_rle(const std::string& compressed, Dims dims) {
  // LEB128-like 5-bit groups with sign extension and delta coding of counts
  // beyond the second, as produced by the reference COCO tooling.
  std::vector<std::uint32_t> counts;
  std::size_t p = 0;
  while (p < compressed.size()) {
    std::int64_t x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= compressed.size()) {
        throw Error("truncated compressed RLE string");
      }
      const int c = compressed[p] - 48;
      x |= static_cast<std::int64_t>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10) != 0) {
        x |= static_cast<std::int64_t>(-1) * (std::int64_t{1} << (5 * k));
      }
    }
    if (counts.size() > 2) {
      x += counts[counts.size() - 2];
    }
    if (x < 0) {
      throw Error("negative run in compressed RLE string");
    }
    counts.push_back(static_cast<std::uint32_t>(x));
  }
  return decode_coco_rle(counts, dims);
}

RegionMask rasterize_region(const GroundTruthObject& obj, Dims dims) {
  if (obj.mask) {
    if (obj.mask->dims() != dims) {
      throw Error("rasterize_region: mask dimensions do not match the image");
    }
    return *obj.mask;
  }
  const BoundingBox b = obj.bbox.clamped(dims);
  if (b.empty()) {
    throw Error("rasterize_region: bounding box of object " + std::to_string(obj.object_id) +
                " is empty after clamping");
  }
  return RegionMask::from_box(dims, b);
}

namespace {

BoundingBox box_from_floats(double x, double y, double w, double h) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = static_cast<int>(std::ceil(x + w));
  const int y1 = static_cast<int>(std::ceil(y + h));
  return {x0, y0, x1 - x0, y1 - y0};
}

// Applies the mask/bbox invariant. Returns an error message, empty if fine.
std::string finalize_object(GroundTruthObject& obj, Dims dims) {
  if (obj.mask) {
    if (auto tight = obj.mask->tight_bbox()) {
      obj.bbox = *tight;
      return {};
    }
    obj.mask.reset();
    obj.bbox = obj.bbox.clamped(dims);
    if (obj.bbox.empty()) {
      return "empty mask and empty bbox";
    }
    return "empty mask dropped, object kept as box-only";
  }
  obj.bbox = obj.bbox.clamped(dims);
  if (obj.bbox.empty()) {
    return "bbox is empty after clamping to the image";
  }
  return {};
}

json parse_json_or_throw(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": " + e.what(), e.byte);
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string json_id_string(const json& v) {
  if (v.is_string()) {
    return v.get<std::string>();
  }
  if (v.is_number_integer()) {
    return std::to_string(v.get<std::int64_t>());
  }
  return v.dump();
}

Dataset parse_coco_doc(const std::string& json_text, const std::filesystem::path& image_root,
                       const std::string& source_name) {
  const json doc = parse_json_or_throw(json_text, source_name);
  if (!doc.is_object() || !doc.contains("images") || !doc.contains("annotations") ||
      !doc.contains("categories")) {
    throw ParseError(source_name + ": expected images, annotations and categories arrays", 0);
  }

  Dataset ds;
  auto issue = [&](LoadIssue::Level level, const std::string& what) {
    ds.issues.push_back({level, source_name, what});
  };

  std::vector<std::pair<std::int64_t, std::string>> cats;
  for (const auto& c : doc.at("categories")) {
    cats.emplace_back(c.at("id").get<std::int64_t>(), c.at("name").get<std::string>());
  }
  std::sort(cats.begin(), cats.end());
  std::map<std::int64_t, CategoryId> cat_index;
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto& [id, name] : cats) {
    std::string unique = name;
    if (!seen.insert(name).second) {
      unique = name + "#" + std::to_string(id);
      seen.insert(unique);
      issue(LoadIssue::Level::record, "duplicate category name '" + name + "' renamed to '" +
                                           unique + "'");
    }
    cat_index[id] = static_cast<CategoryId>(names.size());
    names.push_back(unique);
  }
  ds.labels = LabelMap(std::move(names));

  std::map<std::string, std::size_t> image_index;
  std::vector<AnnotatedImage> images;
  for (const auto& im : doc.at("images")) {
    AnnotatedImage img;
    img.image_id = json_id_string(im.at("id"));
    img.path = image_root / im.value("file_name", img.image_id);
    img.width = im.at("width").get<int>();
    img.height = im.at("height").get<int>();
    image_index[img.image_id] = images.size();
    images.push_back(std::move(img));
  }

  auto add_annotation = [&](const json& a) {
    const std::string ann_id = a.contains("id") ? json_id_string(a.at("id")) : "?";
    const std::string where = "annotation " + ann_id;
    const std::string image_key = json_id_string(a.at("image_id"));
    const auto img_it = image_index.find(image_key);
    if (img_it == image_index.end()) {
      issue(LoadIssue::Level::record, where + ": unknown image id " + image_key);
      return;
    }
    const std::int64_t cat = a.at("category_id").get<std::int64_t>();
    const auto cat_it = cat_index.find(cat);
    if (cat_it == cat_index.end()) {
      issue(LoadIssue::Level::record, where + ": unknown category id " + std::to_string(cat));
      return;
    }
    AnnotatedImage& img = images[img_it->second];
    GroundTruthObject obj;
    obj.label = cat_it->second;
    obj.object_id = a.contains("id") ? a.at("id").get<ObjectId>() : img.objects.size();
    if (a.contains("bbox") && a.at("bbox").size() == 4) {
      const auto& b = a.at("bbox");
      obj.bbox = box_from_floats(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                 b[3].get<double>());
    }
    try {
      if (a.contains("segmentation")) {
        const auto& seg = a.at("segmentation");
        if (seg.is_array() && !seg.empty()) {
          RegionMask m(img.dims());
          for (const auto& poly : seg) {
            m = m | rasterize_polygon(poly.get<std::vector<double>>(), img.dims());
          }
          obj.mask = std::move(m);
        } else if (seg.is_object()) {
          const auto size = seg.at("size").get<std::vector<int>>();
          if (size.size() != 2 || size[0] != img.height || size[1] != img.width) {
            throw Error("RLE size does not match image dimensions");
          }
          const auto& counts = seg.at("counts");
          obj.mask = counts.is_string()
                         ? decode_coco_rle(counts.get<std::string>(), img.dims())
                         : decode_coco_rle(counts.get<std::vector<std::uint32_t>>(), img.dims());
        }
      }
    } catch (const std::exception& e) {
      issue(LoadIssue::Level::record, where + ": bad segmentation: " + e.what());
      obj.mask.reset();
    }
    const std::string problem = finalize_object(obj, img.dims());
    if (!problem.empty()) {
      issue(LoadIssue::Level::record, where + ": " + problem);
      if (obj.bbox.empty()) {
        return;
      }
    }
    img.objects.push_back(std::move(obj));
  };
  for (const auto& a : doc.at("annotations")) {
    try {
      add_annotation(a);
    } catch (const json::exception& e) {
      issue(LoadIssue::Level::record, std::string("malformed annotation: ") + e.what());
    }
  }

  for (auto& img : images) {
    if (img.objects.empty()) {
      issue(LoadIssue::Level::file, "image " + img.image_id + " has no usable objects; rejected");
      continue;
    }
    ds.images.push_back(std::move(img));
  }
  return ds;
}

}  // namespace

Dataset parse_coco(const std::string& json_text, const std::filesystem::path& image_root,
                   const std::string& source_name) {
  try {
    return parse_coco_doc(json_text, image_root, source_name);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source_name + ": " + e.what(), 0);
  }
}

Dataset load_coco(const std::filesystem::path& annotation_file,
                  const std::filesystem::path& image_root) {
  return parse_coco(read_text(annotation_file), image_root, annotation_file.string());
}

namespace {

Dataset parse_fixture_doc(const std::string& json_text, const std::filesystem::path& base_dir) {
  const json doc = parse_json_or_throw(json_text, "fixture");
  if (doc.value("format", "") != "orts-fixture") {
    throw ParseError("fixture: missing \"format\": \"orts-fixture\"", 0);
  }
  Dataset ds;
  ds.labels = LabelMap(doc.at("labels").get<std::vector<std::string>>());
  for (const auto& im : doc.at("images")) {
    AnnotatedImage img;
    img.image_id = im.at("image_id").get<std::string>();
    const auto rel = std::filesystem::path(im.at("path").get<std::string>());
    img.path = rel.is_absolute() || base_dir.empty() ? rel : base_dir / rel;
    img.width = im.at("width").get<int>();
    img.height = im.at("height").get<int>();
    for (const auto& o : im.at("objects")) {
      GroundTruthObject obj;
      obj.object_id = o.at("object_id").get<ObjectId>();
      obj.label = o.at("label").get<CategoryId>();
      if (obj.label < 0 || static_cast<std::size_t>(obj.label) >= ds.labels.size()) {
        ds.issues.push_back({LoadIssue::Level::record, img.image_id,
                             "object " + std::to_string(obj.object_id) + ": label out of range"});
        continue;
      }
      const auto b = o.at("bbox").get<std::vector<int>>();
      if (b.size() != 4) {
        throw ParseError("fixture: bbox must have 4 entries", 0);
      }
      obj.bbox = {b[0], b[1], b[2], b[3]};
      if (o.contains("mask")) {
        const auto& rows = o.at("mask");
        if (rows.size() != static_cast<std::size_t>(img.height)) {
          throw ParseError("fixture: mask height mismatch for " + img.image_id, 0);
        }
        RegionMask m(img.dims());
        for (int y = 0; y < img.height; ++y) {
          const auto& row = rows[static_cast<std::size_t>(y)];
          if (row.size() != static_cast<std::size_t>(img.width)) {
            throw ParseError("fixture: mask width mismatch for " + img.image_id, 0);
          }
          for (int x = 0; x < img.width; ++x) {
            m.set(x, y, row[static_cast<std::size_t>(x)].get<int>() != 0);
          }
        }
        obj.mask = std::move(m);
      }
      const std::string problem = finalize_object(obj, img.dims());
      if (!problem.empty()) {
        ds.issues.push_back({LoadIssue::Level::record, img.image_id,
                             "object " + std::to_string(obj.object_id) + ": " + problem});
        if (obj.bbox.empty()) {
          continue;
        }
      }
      img.objects.push_back(std::move(obj));
    }
    ds.images.push_back(std::move(img));
  }
  return ds;
}

}  // namespace

Dataset parse_fixture(const std::string& json_text, const std::filesystem::path& base_dir) {
  try {
    return parse_fixture_doc(json_text, base_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("fixture: ") + e.what(), 0);
  }
}

Dataset load_fixture(const std::filesystem::path& file) {
  return parse_fixture(read_text(file), file.parent_path());
}

std::string serialize_fixture(const Dataset& dataset, const std::filesystem::path& base_dir) {
  json doc;
  doc["format"] = "orts-fixture";
  doc["version"] = 1;
  doc["labels"] = dataset.labels.names();
  json images = json::array();
  for (const auto& img : dataset.images) {
    json im;
    im["image_id"] = img.image_id;
    std::filesystem::path p = img.path;
    if (!base_dir.empty() && !p.empty()) {
      p = p.lexically_relative(base_dir);
      if (p.empty()) {
        p = img.path;
      }
    }
    im["path"] = p.generic_string();
    im["width"] = img.width;
    im["height"] = img.height;
    json objs = json::array();
    for (const auto& o : img.objects) {
      json jo;
      jo["object_id"] = o.object_id;
      jo["label"] = o.label;
      jo["bbox"] = {o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h};
      if (o.mask) {
        json rows = json::array();
        for (int y = 0; y < o.mask->height(); ++y) {
          std::vector<int> row(static_cast<std::size_t>(o.mask->width()));
          for (int x = 0; x < o.mask->width(); ++x) {
            row[static_cast<std::size_t>(x)] = o.mask->test(x, y) ? 1 : 0;
          }
          rows.push_back(std::move(row));
        }
        jo["mask"] = std::move(rows);
      }
      objs.push_back(std::move(jo));
    }
    im["objects"] = std::move(objs);
    images.push_back(std::move(im));
  }
  doc["images"] = std::move(images);
  return doc.dump();
}

void save_fixture(const Dataset& dataset, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + file.string());
  }
  out << serialize_fixture(dataset, file.parent_path()) << '\n';
}

Dataset load_dataset_spec(const std::string& spec,
                          const std::optional<std::filesystem::path>& image_root) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw Error("dataset spec must look like <coco|voc|fixture>:<path>, got '" + spec + "'");
  }
  const std::string fmt = spec.substr(0, colon);
  const std::filesystem::path path = spec.substr(colon + 1);
  if (fmt == "coco") {
    return load_coco(path, image_root.value_or(path.parent_path()));
  }
  if (fmt == "voc") {
    std::filesystem::path root = path;
    if (!image_root) {
      const auto jpeg = path.parent_path() / "JPEGImages";
      if (std::filesystem::is_directory(jpeg)) {
        root = jpeg;
      }
    }
    return load_voc(path, image_root.value_or(root));
  }
  if (fmt == "fixture") {
    return load_fixture(path);
  }
  throw Error("unknown dataset format '" + fmt + "'");
}

}  // namespace orts
