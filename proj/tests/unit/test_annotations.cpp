#include <fstream>
#include <random>

#include "orts/annotations.hpp"
#include "test_util.hpp"

using namespace orts;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

// Column-major counts -> COCO's compressed string (pycocotools rleToString).
std::string coco_rle_string(const std::vector<std::uint32_t>& counts) {
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    long long x = counts[i];
    if (i > 2) {
      x -= counts[i - 2];
    }
    bool more = true;
    while (more) {
      long long c = x & 0x1f;
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) {
        c |= 0x20;
      }
      s += static_cast<char>(c + 48);
    }
  }
  return s;
}

std::vector<std::uint32_t> column_major_counts(const RegionMask& m) {
  std::vector<std::uint32_t> counts;
  bool cur = false;
  std::uint32_t run = 0;
  for (int x = 0; x < m.width(); ++x) {
    for (int y = 0; y < m.height(); ++y) {
      if (m.test(x, y) != cur) {
        counts.push_back(run);
        run = 0;
        cur = !cur;
      }
      ++run;
    }
  }
  counts.push_back(run);
  return counts;
}

const char* kCoco = R"({
  "images": [{"id": 7, "file_name": "a.png", "width": 8, "height": 8}],
  "categories": [{"id": 3, "name": "dog"}, {"id": 1, "name": "cat"}],
  "annotations": [
    {"id": 100, "image_id": 7, "category_id": 1, "bbox": [0, 0, 4, 4],
     "segmentation": [[0, 0, 4, 0, 4, 4, 0, 4]]},
    {"id": 101, "image_id": 7, "category_id": 3, "bbox": [2, 2, 3, 3]},
    {"id": 102, "image_id": 7, "category_id": 99, "bbox": [1, 1, 2, 2]}
  ]
})";

}  // namespace

TEST_CASE("label map") {
  LabelMap m({"a", "b"});
  CHECK(m.size() == 2);
  CHECK(m.name(1) == "b");
  CHECK(m.find("a") == 0);
  CHECK_FALSE(m.find("z").has_value());
  CHECK_THROWS_AS(LabelMap({"a", "a"}), Error);
}

TEST_CASE("COCO: polygon plus box-only, unknown category is a record issue") {
  const Dataset ds = parse_coco(kCoco, "/data");
  REQUIRE(ds.images.size() == 1);
  const auto& img = ds.images[0];
  CHECK(img.image_id == "7");
  CHECK(img.path == std::filesystem::path("/data/a.png"));
  REQUIRE(img.objects.size() == 2);
  // Category ids become contiguous in ascending COCO-id order.
  CHECK(ds.labels.names() == std::vector<std::string>{"cat", "dog"});
  CHECK(img.objects[0].label == 0);
  CHECK(img.objects[0].mask.has_value());
  CHECK_FALSE(img.objects[1].mask.has_value());
  CHECK(img.objects[0].object_id != img.objects[1].object_id);
  REQUIRE(ds.issues.size() == 1);
  CHECK(ds.issues[0].level == LoadIssue::Level::record);
}

TEST_CASE("polygon rasterization samples pixel centers") {
  const auto m = rasterize_polygon({0, 0, 4, 0, 4, 4, 0, 4}, {8, 8});
  CHECK(m.popcount() == 16);
  CHECK(m.tight_bbox() == BoundingBox{0, 0, 4, 4});

  // Full square and a centred square.
  auto outer = rasterize_polygon({0, 0, 8, 0, 8, 8, 0, 8}, {8, 8});
  auto inner = rasterize_polygon({2, 2, 6, 2, 6, 6, 2, 6}, {8, 8});
  CHECK(outer.popcount() == 64);
  CHECK(inner.popcount() == 16);

  // Scanline oracle on a triangle.
  const std::vector<double> tri{0.5, 0.5, 9.5, 0.5, 0.5, 7.5};
  const auto t = rasterize_polygon(tri, {10, 8});
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 10; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      // Inside iff below the hypotenuse from (9.5,0.5) to (0.5,7.5) and inside the legs.
      const double side = (py - 0.5) * 9.0 + (px - 0.5) * 7.0 - 63.0;
      const bool inside = px > 0.5 && py > 0.5 && side < 0;
      // Centers exactly on an edge are left to the fill convention.
      if (std::abs(side) > 1e-9 && px != 0.5 && py != 0.5) {
        CHECK(t.test(x, y) == inside);
      }
    }
  }
}

TEST_CASE("COCO RLE: counts and compressed strings agree with the mask") {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 25; ++trial) {
    const int w = 3 + trial % 11;
    const int h = 2 + trial % 5;
    const auto m = test::random_mask(w, h, 0.5, rng);
    const auto counts = column_major_counts(m);
    CHECK(decode_coco_rle(counts, {w, h}) == m);
    CHECK(decode_coco_rle(coco_rle_string(counts), {w, h}) == m);
  }
  CHECK_THROWS_AS(decode_coco_rle(std::vector<std::uint32_t>{5}, {2, 2}), Error);
}

TEST_CASE("COCO RLE segmentation in a document; tight bbox equals bbox") {
  RegionMask m(6, 4);
  m.set(1, 1);
  m.set(2, 1);
  m.set(2, 2);
  const std::string doc = R"({"images":[{"id":"x","width":6,"height":4}],
    "categories":[{"id":1,"name":"a"}],
    "annotations":[{"id":1,"image_id":"x","category_id":1,"bbox":[0,0,6,4],
      "segmentation":{"size":[4,6],"counts":")" +
                          coco_rle_string(column_major_counts(m)) + R"("}}]})";
  const Dataset ds = parse_coco(doc, ".");
  REQUIRE(ds.images.at(0).objects.size() == 1);
  const auto& o = ds.images[0].objects[0];
  REQUIRE(o.mask.has_value());
  CHECK(*o.mask == m);
  CHECK(o.bbox == *m.tight_bbox());
}

TEST_CASE("malformed COCO reports a byte offset") {
  try {
    parse_coco("{\"images\": [", ".");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset() > 0);
  }
}

TEST_CASE("VOC: inclusive 1-based corners, empty files rejected") {
  test::TempDir dir("voc");
  write_text(dir / "a.xml", R"(<annotation><filename>a.png</filename>
    <size><width>20</width><height>20</height><depth>3</depth></size>
    <object><name>cat</name><bndbox><xmin>1</xmin><ymin>1</ymin><xmax>10</xmax><ymax>10</ymax></bndbox></object>
    <object><name>cat</name><bndbox><xmin>5</xmin><ymin>5</ymin><xmax>8</xmax><ymax>9</ymax></bndbox></object>
    </annotation>)");
  write_text(dir / "b.xml", R"(<annotation><filename>b.png</filename>
    <size><width>20</width><height>20</height><depth>3</depth></size></annotation>)");
  const Dataset ds = load_voc(dir.path(), dir.path());
  REQUIRE(ds.images.size() == 1);
  const auto& img = ds.images[0];
  REQUIRE(img.objects.size() == 2);
  CHECK(img.objects[0].bbox == BoundingBox{0, 0, 10, 10});
  CHECK(img.objects[0].object_id != img.objects[1].object_id);
  CHECK(img.objects[0].label == img.objects[1].label);
  bool file_issue = false;
  for (const auto& i : ds.issues) {
    file_issue |= i.level == LoadIssue::Level::file;
  }
  CHECK(file_issue);
}

TEST_CASE("rasterize_region") {
  GroundTruthObject box_only{0, {2, 2, 3, 3}, std::nullopt, 1};
  const auto r = rasterize_region(box_only, {8, 8});
  CHECK(r.dims() == Dims{8, 8});
  CHECK(r.popcount() == 9);

  GroundTruthObject with_mask{0, {1, 1, 2, 1}, RegionMask(8, 8), 2};
  with_mask.mask->set(1, 1);
  with_mask.mask->set(2, 1);
  CHECK(rasterize_region(with_mask, {8, 8}) == *with_mask.mask);

  GroundTruthObject off_image{0, {20, 20, 3, 3}, std::nullopt, 3};
  CHECK_THROWS_AS(rasterize_region(off_image, {8, 8}), Error);
}

TEST_CASE("fixture round trip is lossless") {
  test::TempDir dir("fx");
  Dataset ds;
  ds.labels = LabelMap({"a", "b"});
  AnnotatedImage img;
  img.image_id = "one";
  img.path = dir / "one.png";
  img.width = 6;
  img.height = 5;
  RegionMask m(6, 5);
  m.set(2, 1);
  m.set(3, 2);
  img.objects.push_back({1, {2, 1, 2, 2}, m, 4});
  img.objects.push_back({0, {0, 0, 2, 2}, std::nullopt, 5});
  ds.images.push_back(img);
  save_fixture(ds, dir / "fixture.json");
  const Dataset back = load_fixture(dir / "fixture.json");
  CHECK(back.labels == ds.labels);
  REQUIRE(back.images.size() == 1);
  CHECK(back.images[0] == ds.images[0]);
  CHECK(serialize_fixture(back, dir.path()) == serialize_fixture(ds, dir.path()));
}

TEST_CASE("dataset spec dispatch") {
  test::TempDir dir("spec");
  write_text(dir / "c.json", kCoco);
  CHECK(load_dataset_spec("coco:" + (dir / "c.json").string(), dir.path()).images.size() == 1);
  CHECK_THROWS_AS(load_dataset_spec("parquet:" + (dir / "c.json").string()), Error);
  CHECK_THROWS_AS(load_dataset_spec("no-colon"), Error);
}
