#include <random>

#include "orts/geometry.hpp"
#include "orts/raster.hpp"
#include "test_util.hpp"

using namespace orts;

TEST_CASE("bounding box clamping") {
  const Dims d{10, 8};
  CHECK(BoundingBox{-2, -3, 5, 5}.clamped(d) == BoundingBox{0, 0, 3, 2});
  CHECK(BoundingBox{8, 6, 5, 5}.clamped(d) == BoundingBox{8, 6, 2, 2});
  CHECK(BoundingBox{12, 0, 3, 3}.clamped(d).empty());
}

TEST_CASE("mask from box and tight bbox") {
  const auto m = RegionMask::from_box({8, 8}, {2, 2, 3, 3});
  CHECK(m.popcount() == 9);
  CHECK(m.tight_bbox() == BoundingBox{2, 2, 3, 3});
  CHECK_FALSE(RegionMask(4, 4).tight_bbox().has_value());
}

TEST_CASE("set algebra") {
  const auto a = RegionMask::from_box({6, 6}, {0, 0, 3, 6});
  const auto b = RegionMask::from_box({6, 6}, {2, 0, 4, 6});
  CHECK((a | b).popcount() == 36);
  CHECK((a & b).popcount() == 6);
  CHECK(a.complement().popcount() == 18);
  CHECK((a & a.complement()).popcount() == 0);
}

namespace {

bool brute_dilate(const RegionMask& m, int x, int y, int r) {
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (m.contains(x + dx, y + dy)) {
        return true;
      }
    }
  }
  return false;
}

bool brute_erode(const RegionMask& m, int x, int y, int r, bool border_outside) {
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const int nx = x + dx;
      const int ny = y + dy;
      const bool inside = nx >= 0 && ny >= 0 && nx < m.width() && ny < m.height();
      if (!inside) {
        if (border_outside) {
          return false;
        }
        continue;
      }
      if (!m.test(nx, ny)) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("dilate and erode match brute force") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = 5 + trial % 9;
    const int h = 4 + trial % 7;
    const auto m = test::random_mask(w, h, trial % 2 ? 0.8 : 0.3, rng);
    for (int r = 0; r <= 3; ++r) {
      const auto d = m.dilate(r);
      const auto e = m.erode(r);
      const auto eb = m.erode(r, true);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          REQUIRE(d.test(x, y) == brute_dilate(m, x, y, r));
          REQUIRE(e.test(x, y) == brute_erode(m, x, y, r, false));
          REQUIRE(eb.test(x, y) == brute_erode(m, x, y, r, true));
        }
      }
    }
  }
}

TEST_CASE("row-major RLE round trip") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = test::random_mask(1 + trial % 13, 1 + trial % 7, 0.4, rng);
    const auto counts = encode_rle_row_major(m);
    std::uint64_t total = 0;
    for (auto c : counts) {
      total += c;
    }
    CHECK(total == static_cast<std::uint64_t>(m.width() * m.height()));
    CHECK(decode_rle_row_major(counts, m.dims()) == m);
  }
  // Leading run is unset pixels, possibly empty.
  auto m = RegionMask(3, 1);
  m.set(0, 0);
  CHECK(encode_rle_row_major(m) == std::vector<std::uint32_t>{0, 1, 2});
  CHECK_THROWS_AS(decode_rle_row_major({1, 1}, {3, 1}), Error);
}

TEST_CASE("PNG round trip") {
  std::mt19937 rng(3);
  const auto img = test::random_image(17, 9, rng);
  const auto bytes = encode_png(img);
  CHECK(decode_png(bytes) == img);

  test::TempDir dir("png");
  write_png(img, dir / "a.png");
  CHECK(read_png(dir / "a.png") == img);
  CHECK_THROWS_AS(decode_png(std::vector<std::uint8_t>{1, 2, 3}), Error);
}
