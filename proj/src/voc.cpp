#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <set>

#include "orts/annotations.hpp"

namespace orts {

namespace pt = boost::property_tree;

namespace {

struct VocObject {
  std::string name;
  std::optional<BoundingBox> box;
};

struct VocFile {
  std::string filename;
  int width = 0;
  int height = 0;
  std::vector<VocObject> objects;
};

VocFile read_voc_file(const std::filesystem::path& file) {
  pt::ptree tree;
  pt::read_xml(file.string(), tree);
  const pt::ptree& ann = tree.get_child("annotation");
  VocFile out;
  out.filename = ann.get<std::string>("filename", file.stem().string() + ".png");
  out.width = ann.get<int>("size.width");
  out.height = ann.get<int>("size.height");
  for (const auto& [key, node] : ann) {
    if (key != "object") {
      continue;
    }
    VocObject obj;
    obj.name = node.get<std::string>("name");
    if (const auto bb = node.get_child_optional("bndbox")) {
      // VOC corners are 1-based and inclusive.
      const int xmin = static_cast<int>(std::lround(bb->get<double>("xmin")));
      const int ymin = static_cast<int>(std::lround(bb->get<double>("ymin")));
      const int xmax = static_cast<int>(std::lround(bb->get<double>("xmax")));
      const int ymax = static_cast<int>(std::lround(bb->get<double>("ymax")));
      obj.box = BoundingBox{xmin - 1, ymin - 1, xmax - xmin + 1, ymax - ymin + 1};
    }
    out.objects.push_back(std::move(obj));
  }
  return out;
}

}  // namespace

Dataset load_voc(const std::filesystem::path& annotation_dir,
                 const std::filesystem::path& image_root,
                 const std::vector<std::string>& label_names) {
  if (!std::filesystem::is_directory(annotation_dir)) {
    throw Error("VOC annotation directory not found: " + annotation_dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(annotation_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  Dataset ds;
  std::vector<std::pair<std::filesystem::path, VocFile>> parsed;
  for (const auto& f : files) {
    try {
      parsed.emplace_back(f, read_voc_file(f));
    } catch (const std::exception& e) {
      ds.issues.push_back({LoadIssue::Level::file, f.string(), e.what()});
    }
  }

  if (label_names.empty()) {
    std::set<std::string> names;
    for (const auto& [f, vf] : parsed) {
      for (const auto& o : vf.objects) {
        names.insert(o.name);
      }
    }
    ds.labels = LabelMap({names.begin(), names.end()});
  } else {
    ds.labels = LabelMap(label_names);
  }

  for (auto& [f, vf] : parsed) {
    AnnotatedImage img;
    img.image_id = f.stem().string();
    img.path = image_root / vf.filename;
    img.width = vf.width;
    img.height = vf.height;
    if (vf.objects.empty()) {
      ds.issues.push_back({LoadIssue::Level::file, f.string(), "no objects; image rejected"});
      continue;
    }
    ObjectId index = 0;
    for (const auto& o : vf.objects) {
      const ObjectId id = index++;
      const std::string where = "object " + std::to_string(id) + " (" + o.name + ")";
      if (!o.box) {
        ds.issues.push_back({LoadIssue::Level::record, f.string(), where + ": missing bndbox"});
        continue;
      }
      const auto label = ds.labels.find(o.name);
      if (!label) {
        ds.issues.push_back({LoadIssue::Level::record, f.string(), where + ": unknown label"});
        continue;
      }
      GroundTruthObject obj;
      obj.object_id = id;
      obj.label = *label;
      obj.bbox = o.box->clamped(img.dims());
      if (obj.bbox.empty()) {
        ds.issues.push_back({LoadIssue::Level::record, f.string(), where + ": empty bndbox"});
        continue;
      }
      img.objects.push_back(std::move(obj));
    }
    if (img.objects.empty()) {
      ds.issues.push_back({LoadIssue::Level::file, f.string(), "no usable objects; image rejected"});
      continue;
    }
    ds.images.push_back(std::move(img));
  }
  return ds;
}

}  // namespace orts
