#include <json.hpp>

#include "orts/harness.hpp"
#include "orts/mockmodel.hpp"
#include "test_util.hpp"

using namespace orts;

namespace {

GroundTruthObject box_obj(CategoryId label, BoundingBox b, ObjectId id) {
  return {label, b, std::nullopt, id};
}

Dataset first_n(const Dataset& ds, std::size_t n) {
  Dataset out = ds;
  out.images.resize(std::min(n, out.images.size()));
  return out;
}

HarnessConfig single_thread() {
  HarnessConfig c;
  c.mutation_threads = 1;
  return c;
}

struct Served {
  explicit Served(ModelBackend b) : server(std::move(b)) { server.start(); }
  ~Served() { server.stop(); }
  ProtocolServer server;
};

InferenceReport fake_report(const std::string& id, const std::string& label, bool flagged) {
  InferenceReport r;
  r.image_id = id;
  r.label_name = label;
  r.flagged = flagged;
  r.p = 0.9;
  r.j = 1;
  return r;
}

ReportDocument fake_doc(const std::string& model, std::vector<InferenceReport> reports) {
  ReportDocument d;
  d.metadata.model = model;
  d.reports = std::move(reports);
  d.summary.images_selected = d.reports.size();
  return d;
}

}  // namespace

TEST_CASE("object region: single object, best-ranked label, union fallback") {
  AnnotatedImage img;
  img.image_id = "i";
  img.width = img.height = 40;
  img.objects = {box_obj(3, {2, 2, 5, 5}, 1)};
  auto r = identify_object_region(img, [](CategoryId) { return 1; }, 5);
  CHECK(r.region.popcount() == 25);
  CHECK(r.label == 3);
  CHECK(r.label_in_top_k);

  // cat (label 1) ranks 2, dog (label 2) ranks 7.
  img.objects = {box_obj(1, {0, 0, 4, 4}, 1), box_obj(2, {20, 20, 6, 6}, 2), box_obj(1, {10, 0, 2, 2}, 3)};
  r = identify_object_region(img, [](CategoryId l) { return l == 1 ? 2 : 7; }, 5);
  CHECK(r.label == 1);
  CHECK(r.region.popcount() == 16 + 4);
  CHECK(r.object_ids == std::vector<ObjectId>{1, 3});
  CHECK(r.bbox == BoundingBox{0, 0, 12, 4});

  r = identify_object_region(img, [](CategoryId) { return 9; }, 5);
  CHECK_FALSE(r.label_in_top_k);
  CHECK(r.region.popcount() == 16 + 36 + 4);
  CHECK_FALSE(r.has_mask);
}

TEST_CASE("config: defaults, round trip, unknown keys") {
  const auto c = HarnessConfig::from_json("{}");
  CHECK(c.top_k_gate == 5);
  CHECK(c.inflight == 4);
  CHECK(c.relevancy.prob_threshold == 0.5);
  CHECK_FALSE(c.keep_artifacts);
  CHECK(c.removing_label_restrict);

  const auto d = HarnessConfig::from_json(
      R"({"prob_threshold": 0.6, "score_threshold": 0.4, "iou_threshold": 0.7, "top_k_gate": 1,
          "inflight": 2, "keep_artifacts": true, "background_dir": null,
          "removing_label_restrict": false, "timeout": 2.5})");
  CHECK(d.relevancy.prob_threshold == 0.6);
  CHECK(d.top_k_gate == 1);
  CHECK(d.timeout == std::chrono::milliseconds(2500));
  const auto e = HarnessConfig::from_json(d.to_json());
  CHECK(e.to_json() == d.to_json());

  CHECK_THROWS_AS(HarnessConfig::from_json(R"({"prob_treshold": 0.5})"), Error);
  CHECK_THROWS_AS(HarnessConfig::from_json(R"({"top_k_gate": 0})"), Error);
  CHECK_THROWS_AS(HarnessConfig::from_json(R"({"imaging": {"median_kernel": 4}})"), Error);
  CHECK_THROWS_AS(HarnessConfig::from_json(R"({"timeout": "soon"})"), Error);
  CHECK_THROWS_AS(HarnessConfig::from_json("[1,"), Error);
}

TEST_CASE("classification suite against the keyed mocks") {
  test::TempDir dir("cls");
  const Dataset ds = first_n(make_relevancy_fixtures(dir.path()), 5);
  const auto cfg = single_thread();

  SUBCASE("object-keyed: relevant, nothing flagged") {
    MockModel model(MockKind::object_keyed, MockRegistry::from_dataset(ds));
    Served s(model.backend());
    ModelClient client(s.server.url(), cfg.client_options());
    const auto doc = run_classification_suite(ds, client, cfg);
    CHECK(doc.summary.images_selected == 5);
    REQUIRE(doc.reports.size() == 5);
    for (const auto& r : doc.reports) {
      CHECK(r.score.s >= 0.8);
      CHECK_FALSE(r.flagged);
      CHECK(r.score.per_op_distances.size() + r.score.inapplicable_ops.size() == 38);
    }
    CHECK(doc.summary.flagged == 0);
  }

  SUBCASE("background-keyed: irrelevant, confident images flagged") {
    MockModel model(MockKind::background_keyed, MockRegistry::from_dataset(ds));
    Served s(model.backend());
    ModelClient client(s.server.url(), cfg.client_options());
    const auto doc = run_classification_suite(ds, client, cfg);
    REQUIRE(doc.reports.size() == 5);
    for (const auto& r : doc.reports) {
      CHECK(r.score.s <= 0.2);
      CHECK(r.flagged == (r.p >= 0.5));
    }
  }
}

TEST_CASE("images outside the top-k gate are excluded; bad images are isolated") {
  test::TempDir dir("gate");
  Dataset ds = first_n(make_relevancy_fixtures(dir.path()), 3);
  const CategoryId wrong = ds.images[0].objects[0].label;
  MockModel model(MockKind::object_keyed, MockRegistry::from_dataset(ds));
  ModelBackend backend = model.backend();
  const auto inner = backend.classify;
  // Image 0's label is pushed to the bottom of the ranking on every query.
  const auto src0 = read_png(ds.images[0].path);
  backend.classify = [inner, wrong, src0](const RasterImage& img) {
    auto out = inner(img);
    if (img == src0) {
      std::fill(out.probs.begin(), out.probs.end(), 0.0);
      out.probs[static_cast<std::size_t>((wrong + 1) % kMockClasses)] = 1.0;
    }
    return out;
  };
  ds.images[2].path = dir / "missing.png";
  Served s(backend);
  auto cfg = single_thread();
  cfg.top_k_gate = 1;
  ModelClient client(s.server.url(), cfg.client_options());
  const auto doc = run_classification_suite(ds, client, cfg);
  CHECK(doc.summary.images_total == 3);
  CHECK(doc.summary.images_selected == 1);
  CHECK(doc.summary.images_failed == 1);
  REQUIRE(doc.reports.size() == 1);
  CHECK(doc.reports[0].image_id == ds.images[1].image_id);
  REQUIRE(doc.summary.failures.size() == 1);
  CHECK(doc.summary.failures[0].first == ds.images[2].image_id);
}

TEST_CASE("detection suite: scripted detector, orphan records, repeated labels") {
  test::TempDir dir("det");
  const Dataset ds = first_n(make_detection_fixtures(dir.path()), 2);
  MockModel model(MockKind::scripted, MockRegistry::from_dataset(ds));
  ModelBackend backend = model.backend();
  const auto inner = backend.detect;
  // One extra record whose label has no ground truth anywhere.
  backend.detect = [inner](const RasterImage& img) {
    auto out = inner(img);
    if (!out.records.empty()) {
      out.records.push_back({0, {0, 0, 5, 5}, 0.4, std::nullopt});
    }
    return out;
  };
  Served s(backend);
  const auto cfg = single_thread();
  ModelClient client(s.server.url(), cfg.client_options());
  const auto doc = run_detection_suite(ds, client, cfg);
  CHECK(doc.summary.records_without_associated_object >= 2);
  // The first fixture image holds two objects of one label.
  std::size_t first_image_reports = 0;
  for (const auto& r : doc.reports) {
    first_image_reports += r.image_id == ds.images[0].image_id;
    for (const auto& [op, d] : r.score.per_op_distances) {
      CHECK(d == 1.0);
    }
    CHECK(r.score.s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.iou_aso == 1.0);
    CHECK_FALSE(r.flagged);
  }
  CHECK(first_image_reports == 2);
}

TEST_CASE("a dead endpoint mid-run aborts the suite") {
  test::TempDir dir("abort");
  const Dataset ds = first_n(make_relevancy_fixtures(dir.path()), 3);
  MockModel model(MockKind::object_keyed, MockRegistry::from_dataset(ds));
  auto server = std::make_unique<ProtocolServer>(model.backend());
  server->start();
  auto cfg = single_thread();
  cfg.timeout = std::chrono::milliseconds(1000);
  ModelClient client(server->url(), cfg.client_options());
  client.handshake();
  server->stop();
  server.reset();
  const auto doc = run_classification_suite(ds, client, cfg);
  CHECK(doc.summary.aborted);
  CHECK(doc.summary.images_failed == 1);
  CHECK(doc.reports.empty());
}

TEST_CASE("report serialization") {
  ReportDocument empty;
  const auto j = nlohmann::json::parse(report_to_json(empty));
  CHECK(j.at("schema_version") == 1);
  CHECK(j.at("reports").empty());
  CHECK(report_to_csv(empty) == "image_id,task,label,label_name,record_index,object_id,p,j,iou_aso,s_p,s_r,s,flagged\n");

  ReportDocument doc;
  doc.metadata.generated_at = "2020-01-01T00:00:00Z";
  doc.metadata.config_json = HarnessConfig{}.to_json();
  InferenceReport r = fake_report("a,b", "cat", true);
  r.score.s_p = 0.25;
  r.score.s_r = 0.125;
  r.score.s = 0.1875;
  r.score.per_op_distances = {{"PsvObj/gray", 0.25}};
  r.score.inapplicable_ops = {"RmvObjByMM/mean"};
  doc.reports = {r, fake_report("b", "dog", false)};
  doc.reports[1].record_index = 3;
  doc.reports[1].object_id = 9;
  doc.reports[1].task = Task::detect;
  const auto back = report_from_json(report_to_json(doc));
  REQUIRE(back.reports.size() == 2);
  CHECK(back.reports[0].image_id == "a,b");
  CHECK(back.reports[0].score == doc.reports[0].score);
  CHECK(back.reports[1].record_index == 3u);
  CHECK(back.reports[1].object_id == 9u);
  CHECK(report_body_json(back) == report_body_json(doc));

  const auto csv = report_to_csv(doc);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.find("\"a,b\"") != std::string::npos);

  test::TempDir dir("report");
  emit_report(doc, dir.path());
  CHECK(std::filesystem::exists(dir / "report.csv"));
  CHECK(report_body_json(load_report(dir / "report.json")) == report_body_json(doc));
  CHECK_THROWS_AS(report_from_json(R"({"schema_version": 99})"), Error);
}

TEST_CASE("multi-model aggregation") {
  SUBCASE("one model") {
    const auto s = aggregate_multi_model({fake_doc("m", {fake_report("x", "cat", true), fake_report("y", "cat", false)})});
    CHECK(s.occurrence_histogram == std::map<std::size_t, std::size_t>{{1, 1}});
    CHECK(s.models[0].flagged == 1);
    CHECK(s.models[0].percentage == 0.5);
  }
  SUBCASE("disjoint flags") {
    const auto s = aggregate_multi_model({fake_doc("a", {fake_report("x", "cat", true)}),
                                          fake_doc("b", {fake_report("y", "dog", true)})});
    CHECK(s.occurrences == std::map<std::string, std::size_t>{{"x", 1}, {"y", 1}});
    CHECK(s.always_flagged_by_label.empty());
  }
  SUBCASE("three models agree on one image") {
    std::vector<ReportDocument> docs;
    for (const char* m : {"a", "b", "c"}) {
      docs.push_back(fake_doc(m, {fake_report("x", "cat", true), fake_report(std::string("only-") + m, "dog", true)}));
    }
    const auto s = aggregate_multi_model(docs);
    CHECK(s.occurrence_histogram.at(3) == 1);
    CHECK(s.occurrence_histogram.at(1) == 3);
    CHECK(s.always_flagged_by_label == std::map<std::string, std::size_t>{{"cat", 1}});
    CHECK(nlohmann::json::parse(campaign_summary_to_json(s)).at("models").size() == 3);
  }
}

TEST_CASE("artifacts are written only on request") {
  test::TempDir dir("art");
  const Dataset ds = first_n(make_relevancy_fixtures(dir / "fx"), 1);
  MockModel model(MockKind::object_keyed, MockRegistry::from_dataset(ds));
  Served s(model.backend());
  auto cfg = single_thread();
  ModelClient client(s.server.url(), cfg.client_options());
  SuiteOptions opts{dir / "artifacts"};
  auto doc = run_classification_suite(ds, client, cfg, opts);
  CHECK(doc.reports.at(0).artifacts.empty());
  cfg.keep_artifacts = true;
  doc = run_classification_suite(ds, client, cfg, opts);
  const auto& arts = doc.reports.at(0).artifacts;
  CHECK(arts.size() + doc.reports[0].score.inapplicable_ops.size() == 38);
  for (const auto& a : arts) {
    CHECK(std::filesystem::exists(a));
  }
}
