#include <algorithm>
#include <random>

#include "orts/relevancy.hpp"
#include "test_util.hpp"

using namespace orts;

namespace {

GroundTruthObject gt(CategoryId label, BoundingBox b, ObjectId id) { return {label, b, std::nullopt, id}; }

DetectionRecord rec(CategoryId label, BoundingBox b, double conf = 0.9) { return {label, b, conf, std::nullopt}; }

double box_iou_by_pixels(const BoundingBox& a, const BoundingBox& b, Dims d) {
  const auto ma = RegionMask::from_box(d, a);
  const auto mb = RegionMask::from_box(d, b);
  return static_cast<double>((ma & mb).popcount()) / static_cast<double>((ma | mb).popcount());
}

std::vector<ScoredOperation> full_ops(double d_pres, double d_rgb, double d_tool, double d_mm) {
  const MutationCatalog catalog;
  std::vector<ScoredOperation> ops;
  for (const auto& op : catalog.operations()) {
    const auto& fn = mutation_function(op.function);
    double w = 0.0;
    double d = d_pres;
    switch (op.function) {
      case MutationFunctionId::MvObjToImg:
      case MutationFunctionId::BldObjToImg: w = 1.0 / 36; break;
      case MutationFunctionId::PsvObj: w = 1.0 / 3; break;
      case MutationFunctionId::RmvObjByRGB: w = 1.0 / 27; d = d_rgb; break;
      case MutationFunctionId::RmvObjByTool: w = 1.0 / 6; d = d_tool; break;
      case MutationFunctionId::RmvObjByMM: w = 1.0 / 6; d = d_mm; break;
    }
    ops.push_back({op.operation_id, fn.kind, w, d});
  }
  return ops;
}

}  // namespace

TEST_CASE("rank_of") {
  const std::vector<double> p{0.7, 0.2, 0.1};
  CHECK(rank_of(p, 0).p == 0.7);
  CHECK(rank_of(p, 0).j == 1);
  CHECK(rank_of(std::vector<double>{0.4, 0.4, 0.2}, 1).j == 2);
  CHECK(rank_of(std::vector<double>{0.4, 0.4, 0.2}, 0).j == 1);
  const std::vector<double> flat(6, 1.0 / 6);
  for (int k = 0; k < 6; ++k) {
    CHECK(rank_of(flat, k).j == k + 1);
  }
  CHECK_THROWS_AS(rank_of(p, 3), Error);
}

TEST_CASE("classification distances: worked examples") {
  CHECK(dist_cls_preserving({0, 0.8, 1}, {0, 0.8, 1}) == 1.0);
  CHECK(dist_cls_preserving({0, 0.8, 1}, {0, 0.4, 2}) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(dist_cls_preserving({0, 0.5, 3}, {0, 0.9, 1}) == 1.0);
  CHECK(dist_cls_removing({0, 0.6, 1}, {0, 0.6, 1}) == 0.0);
  CHECK(dist_cls_removing({0, 0.6, 1}, {0, 0.0, 1000}) == doctest::Approx(0.999).epsilon(1e-15));
  for (int jp = 5; jp <= 1000; jp += 97) {
    CHECK(dist_cls_removing({0, 0.3, 5}, {0, 0.0, jp}) <= 0.2);
  }
}

TEST_CASE("detection distances: worked examples") {
  CHECK(dist_det_preserving(0.8, 0.8, true) == 1.0);
  CHECK(dist_det_preserving(0.8, 0.8, false) == 0.0);
  CHECK(dist_det_preserving(0.8, 0.6, true) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(dist_det_removing(0.8, 0.0) == 1.0);
  CHECK(dist_det_removing(0.8, 0.8) == 0.0);
  CHECK(dist_det_removing(0.8, 0.6) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("distances: bounds and monotonicity on random inputs") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> jd(1, 1000);
  for (int i = 0; i < 5000; ++i) {
    const LabelRank s{0, std::max(1e-6, u(rng)), jd(rng)};
    const LabelRank f{0, u(rng), jd(rng)};
    const double dp = dist_cls_preserving(s, f);
    const double dr = dist_cls_removing(s, f);
    REQUIRE(dp >= 0.0);
    REQUIRE(dp <= 1.0);
    REQUIRE(dr >= 0.0);
    REQUIRE(dr <= 1.0);
    // Worse follow-up (lower p', larger j') never raises preserving D nor lowers removing D.
    const LabelRank worse{0, f.p * u(rng), f.j + jd(rng)};
    REQUIRE(dist_cls_preserving(s, worse) <= dp + 1e-15);
    REQUIRE(dist_cls_removing(s, worse) >= dr - 1e-15);

    const double a = std::max(1e-6, u(rng));
    const double b = u(rng);
    REQUIRE(dist_det_preserving(a, b, true) >= 0.0);
    REQUIRE(dist_det_preserving(a, b, true) <= 1.0);
    REQUIRE(dist_det_removing(a, b) >= 0.0);
    REQUIRE(dist_det_removing(a, b) <= 1.0);
  }
}

TEST_CASE("IOU") {
  CHECK(iou(BoundingBox{1, 1, 5, 5}, BoundingBox{1, 1, 5, 5}) == 1.0);
  CHECK(iou(BoundingBox{0, 0, 5, 5}, BoundingBox{6, 6, 5, 5}) == 0.0);
  CHECK(iou(BoundingBox{0, 0, 10, 10}, BoundingBox{5, 0, 10, 10}) == doctest::Approx(1.0 / 3).epsilon(1e-15));

  std::mt19937 rng(1);
  std::uniform_int_distribution<int> pos(0, 30);
  std::uniform_int_distribution<int> ext(1, 20);
  for (int i = 0; i < 300; ++i) {
    const BoundingBox a{pos(rng), pos(rng), ext(rng), ext(rng)};
    const BoundingBox b{pos(rng), pos(rng), ext(rng), ext(rng)};
    REQUIRE(std::abs(iou(a, b) - box_iou_by_pixels(a, b, {64, 64})) <= 1e-6);
    REQUIRE(iou(a, b) == iou(b, a));
  }
  CHECK_THROWS_AS(iou(BoundingBox{0, 0, 0, 0}, BoundingBox{1, 1, 0, 0}), Error);

  const auto m = test::random_mask(9, 9, 0.5, rng);
  CHECK(iou(m, m) == 1.0);
  CHECK(iou(m, m.complement()) == 0.0);
}

TEST_CASE("record IOU uses masks when both sides carry one") {
  RegionMask a(10, 10);
  RegionMask b(10, 10);
  a.set(1, 1);
  b.set(2, 1);
  // Boxes overlap by half, masks not at all.
  const DetectionRecord r{0, {1, 1, 2, 1}, 0.9, a};
  GroundTruthObject g{0, {2, 1, 1, 1}, b, 1};
  CHECK(iou(r, g) == 0.0);
  g.mask.reset();
  CHECK(iou(r, g) == 0.5);
}

TEST_CASE("associated object") {
  AnnotatedImage img;
  img.width = img.height = 50;
  img.objects = {gt(1, {0, 0, 10, 10}, 1), gt(1, {20, 20, 10, 10}, 2), gt(2, {0, 0, 10, 10}, 3)};
  const auto a = find_associated_object(rec(1, {1, 1, 10, 10}), img);
  REQUIRE(a.has_value());
  CHECK(a->gt_object.object_id == 1);
  CHECK_FALSE(find_associated_object(rec(3, {0, 0, 10, 10}), img).has_value());
  CHECK_FALSE(find_associated_object(rec(1, {40, 0, 5, 5}), img).has_value());

  // IOU 0.7 vs 0.3 picks the former.
  AnnotatedImage two;
  two.width = two.height = 100;
  two.objects = {gt(0, {0, 0, 10, 10}, 5), gt(0, {3, 0, 10, 10}, 6)};
  const auto b = find_associated_object(rec(0, {3, 0, 10, 10}), two);
  CHECK(b->gt_object.object_id == 6);
}

TEST_CASE("follow-up matching") {
  AssociatedObject aso{gt(1, {0, 0, 10, 10}, 1), 0.9};
  auto m = match_followup_record(aso, {}, false);
  CHECK(m.iou == 0.0);
  CHECK_FALSE(m.label_match);
  CHECK_FALSE(m.record_index.has_value());

  DetectionOutcome one{{rec(1, {0, 0, 10, 8})}};
  m = match_followup_record(aso, one, false);
  CHECK(m.iou == doctest::Approx(0.8));
  CHECK(m.label_match);

  // 0.6 wrong label vs 0.5 right label, unrestricted -> the 0.6 one.
  DetectionOutcome two{{rec(2, {0, 0, 10, 6}), rec(1, {0, 0, 10, 5})}};
  m = match_followup_record(aso, two, false);
  CHECK(m.iou == doctest::Approx(0.6));
  CHECK_FALSE(m.label_match);
  CHECK(m.record_index == 0u);
  m = match_followup_record(aso, two, true);
  CHECK(m.iou == doctest::Approx(0.5));
  CHECK(m.label_match);
  CHECK(m.record_index == 1u);
}

TEST_CASE("aggregate score") {
  auto ops = full_ops(1.0, 1.0, 1.0, 1.0);
  auto s = aggregate_score(ops);
  CHECK(s.s == doctest::Approx(1.0).epsilon(1e-12));
  s = aggregate_score(full_ops(0.0, 0.0, 0.0, 0.0));
  CHECK(s.s == 0.0);
  s = aggregate_score(full_ops(1.0, 0.9, 0.6, 0.3));
  CHECK(s.s_p == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.s_r == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(s.s == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(s.per_op_distances.size() == 38);

  ops.pop_back();
  CHECK_THROWS_AS(aggregate_score(ops), Error);

  // Order of the input list does not matter.
  auto shuffled = full_ops(0.3, 0.2, 0.7, 0.1);
  const auto ref = aggregate_score(shuffled);
  std::mt19937 rng(2);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(aggregate_score(shuffled) == ref);
}

TEST_CASE("flag rules match the definition on random scores") {
  RelevancyConfig cfg;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double p = u(rng);
    const double s = u(rng);
    REQUIRE(flag_classification(p, s, cfg) == (p >= 0.5 && s <= 0.5));
    REQUIRE(flag_detection(p, s, cfg) == (p >= 0.5 && s <= 0.5));
  }
  CHECK(flag_classification(0.5, 0.5, cfg));
  cfg.prob_threshold = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
