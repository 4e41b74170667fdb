#include "orts/harness.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "parallel.hpp"

namespace orts {

using nlohmann::json;

namespace {

template <typename T>
void read_key(const json& obj, const char* key, T& out, std::set<std::string>& seen) {
  if (const auto it = obj.find(key); it != obj.end()) {
    seen.insert(key);
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw Error(std::string("config key '") + key + "': " + e.what());
    }
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& seen, const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    if (!seen.count(k)) {
      throw Error("unknown config key '" + where + k + "'");
    }
  }
}

std::string artifact_name(const std::string& operation_id) {
  std::string s = operation_id;
  std::replace(s.begin(), s.end(), '/', '_');
  return s + ".png";
}

struct MutantSet {
  std::vector<const WeightedOperation*> ops;
  std::vector<RasterImage> images;
  std::set<std::string> inapplicable;
};

MutantSet build_mutants(const MutationCatalog& catalog, const RasterImage& src,
                        const MutationTarget& target, const std::vector<WeightedOperation>& pres,
                        const std::vector<WeightedOperation>& rem, int threads) {
  MutantSet m;
  for (const auto& w : pres) {
    m.ops.push_back(&w);
  }
  for (const auto& w : rem) {
    m.ops.push_back(&w);
  }
  std::set<std::string> used;
  for (const auto* w : m.ops) {
    used.insert(w->op->operation_id);
  }
  for (const auto& op : catalog.operations()) {
    if (!used.count(op.operation_id)) {
      m.inapplicable.insert(op.operation_id);
    }
  }
  m.images.resize(m.ops.size());
  detail::parallel_for(m.ops.size(), threads, [&](std::size_t i) {
    auto result = catalog.apply(*m.ops[i]->op, src, target);
    if (auto* img = std::get_if<RasterImage>(&result)) {
      m.images[i] = std::move(*img);
    } else {
      throw MutationError(m.ops[i]->op->operation_id,
                          "inapplicable after enumeration: " + std::get<Inapplicable>(result).reason);
    }
  });
  return m;
}

std::vector<std::string> write_artifacts(const SuiteOptions& opts, const HarnessConfig& cfg,
                                         const std::string& subdir, const MutantSet& m) {
  std::vector<std::string> out;
  if (!cfg.keep_artifacts || !opts.artifact_dir) {
    return out;
  }
  const auto dir = *opts.artifact_dir / subdir;
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < m.ops.size(); ++i) {
    const auto file = dir / artifact_name(m.ops[i]->op->operation_id);
    write_png(m.images[i], file);
    out.push_back(file.string());
  }
  return out;
}

std::vector<const RasterImage*> pointers(const std::vector<RasterImage>& v) {
  std::vector<const RasterImage*> out;
  out.reserve(v.size());
  for (const auto& img : v) {
    out.push_back(&img);
  }
  return out;
}

DetectionOutcome to_dataset_labels(const DetectionOutcome& in, const LabelMapping& mapping) {
  DetectionOutcome out;
  for (const auto& r : in.records) {
    if (const auto l = mapping.dataset_label(static_cast<std::size_t>(r.label))) {
      DetectionRecord copy = r;
      copy.label = *l;
      out.records.push_back(std::move(copy));
    }
  }
  return out;
}

RasterImage load_source(const AnnotatedImage& img) {
  RasterImage px = read_png(img.path);
  if (px.dims() != img.dims()) {
    throw Error("image " + img.path.string() + " is " + std::to_string(px.width()) + "x" +
                std::to_string(px.height()) + ", annotation says " + std::to_string(img.width) +
                "x" + std::to_string(img.height));
  }
  return px;
}

ReportDocument new_document(Task task, ModelClient& client, const HarnessConfig& config) {
  ReportDocument doc;
  doc.task = task;
  doc.metadata.generated_at = utc_timestamp();
  doc.metadata.endpoint = client.endpoint();
  doc.metadata.model = client.handshake().model_name;
  doc.metadata.config_json = config.to_json();
  return doc;
}

}  // namespace

// ---- config ----------------------------------------------------------------

HarnessConfig HarnessConfig::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) {
    throw Error("config must be a JSON object");
  }
  HarnessConfig c;
  std::set<std::string> seen;
  try {
    read_key(doc, "prob_threshold", c.relevancy.prob_threshold, seen);
    read_key(doc, "score_threshold", c.relevancy.score_threshold, seen);
    read_key(doc, "iou_threshold", c.relevancy.iou_threshold, seen);
    read_key(doc, "top_k_gate", c.top_k_gate, seen);
    read_key(doc, "inflight", c.inflight, seen);
    read_key(doc, "mutation_threads", c.mutation_threads, seen);
    read_key(doc, "keep_artifacts", c.keep_artifacts, seen);
    read_key(doc, "removing_label_restrict", c.removing_label_restrict, seen);
    read_key(doc, "preserving_label_restrict", c.preserving_label_restrict, seen);
    read_key(doc, "label_remap", c.label_remap, seen);
    if (const auto it = doc.find("background_dir"); it != doc.end()) {
      seen.insert("background_dir");
      if (!it->is_null()) {
        c.background_dir = it->get<std::string>();
      }
    }
    if (const auto it = doc.find("timeout"); it != doc.end()) {
      seen.insert("timeout");
      c.timeout = std::chrono::milliseconds(static_cast<long long>(it->get<double>() * 1000.0));
    }
    if (const auto it = doc.find("imaging"); it != doc.end()) {
      seen.insert("imaging");
      std::set<std::string> iseen;
      auto& p = c.imaging;
      read_key(*it, "band_width", p.band_width, iseen);
      read_key(*it, "median_kernel", p.median_kernel, iseen);
      read_key(*it, "poisson_tol", p.poisson_tol, iseen);
      read_key(*it, "poisson_iters_per_pixel", p.poisson_iters_per_pixel, iseen);
      read_key(*it, "poisson_max_iters", p.poisson_max_iters, iseen);
      read_key(*it, "fmm_radius", p.fmm_radius, iseen);
      read_key(*it, "diffusion_iters", p.diffusion_iters, iseen);
      if (const auto g = it->find("gray"); g != it->end()) {
        iseen.insert("gray");
        const auto v = g->get<std::array<int, 3>>();
        p.gray = {static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]),
                  static_cast<std::uint8_t>(v[2])};
      }
      reject_unknown(*it, iseen, "imaging.");
    }
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  reject_unknown(doc, seen, "");
  c.validate();
  return c;
}

HarnessConfig HarnessConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw Error("cannot read config " + file.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string HarnessConfig::to_json() const {
  nlohmann::ordered_json doc;
  doc["prob_threshold"] = relevancy.prob_threshold;
  doc["score_threshold"] = relevancy.score_threshold;
  doc["iou_threshold"] = relevancy.iou_threshold;
  doc["top_k_gate"] = top_k_gate;
  doc["inflight"] = inflight;
  doc["mutation_threads"] = mutation_threads;
  doc["keep_artifacts"] = keep_artifacts;
  doc["background_dir"] = background_dir ? json(background_dir->string()) : json(nullptr);
  doc["removing_label_restrict"] = removing_label_restrict;
  doc["preserving_label_restrict"] = preserving_label_restrict;
  doc["timeout"] = static_cast<double>(timeout.count()) / 1000.0;
  doc["imaging"] = {{"band_width", imaging.band_width},
                    {"median_kernel", imaging.median_kernel},
                    {"poisson_tol", imaging.poisson_tol},
                    {"poisson_iters_per_pixel", imaging.poisson_iters_per_pixel},
                    {"poisson_max_iters", imaging.poisson_max_iters},
                    {"fmm_radius", imaging.fmm_radius},
                    {"diffusion_iters", imaging.diffusion_iters},
                    {"gray", {imaging.gray.r, imaging.gray.g, imaging.gray.b}}};
  doc["label_remap"] = label_remap;
  return doc.dump();
}

void HarnessConfig::validate() const {
  relevancy.validate();
  if (top_k_gate < 1) {
    throw Error("top_k_gate must be >= 1");
  }
  if (inflight < 1) {
    throw Error("inflight must be >= 1");
  }
  if (timeout.count() <= 0) {
    throw Error("timeout must be positive");
  }
  if (imaging.median_kernel < 3 || imaging.median_kernel % 2 == 0) {
    throw Error("imaging.median_kernel must be odd and >= 3");
  }
  if (imaging.band_width < 0 || imaging.fmm_radius < 1 || imaging.diffusion_iters < 1 ||
      imaging.poisson_iters_per_pixel < 1 || imaging.poisson_max_iters < 1 ||
      !(imaging.poisson_tol > 0)) {
    throw Error("imaging parameters out of range");
  }
}

MutationCatalog HarnessConfig::make_catalog() const {
  return MutationCatalog(background_dir ? BackgroundLibrary::from_directory(*background_dir)
                                        : BackgroundLibrary::procedural(),
                         imaging);
}

// ---- region identification -------------------------------------------------

ObjectRegion region_of_object(const GroundTruthObject& obj, Dims dims) {
  ObjectRegion r;
  r.region = rasterize_region(obj, dims);
  r.bbox = obj.bbox.clamped(dims);
  r.has_mask = obj.mask.has_value();
  r.label = obj.label;
  r.object_ids = {obj.object_id};
  return r;
}

ObjectRegion identify_object_region(const AnnotatedImage& img,
                                    const std::function<int(CategoryId)>& rank_of_label, int top_k) {
  if (img.objects.empty()) {
    throw Error("image " + img.image_id + " has no objects");
  }
  std::optional<CategoryId> best;
  int best_rank = 0;
  for (const CategoryId l : img.labels()) {
    const int j = rank_of_label(l);
    if (j <= top_k && (!best || j < best_rank)) {
      best = l;
      best_rank = j;
    }
  }
  ObjectRegion r;
  r.region = RegionMask(img.dims());
  r.has_mask = true;
  r.label_in_top_k = best.has_value();
  bool first = true;
  for (const auto& obj : img.objects) {
    if (best && obj.label != *best) {
      continue;
    }
    r.region = r.region | rasterize_region(obj, img.dims());
    r.has_mask = r.has_mask && obj.mask.has_value();
    r.object_ids.push_back(obj.object_id);
    const BoundingBox b = obj.bbox.clamped(img.dims());
    if (first) {
      r.bbox = b;
      first = false;
    } else {
      const int x0 = std::min(r.bbox.x, b.x);
      const int y0 = std::min(r.bbox.y, b.y);
      r.bbox = {x0, y0, std::max(r.bbox.right(), b.right()) - x0,
                std::max(r.bbox.bottom(), b.bottom()) - y0};
    }
  }
  // Without a top-k label the union stands in; report the best-ranked label.
  if (best) {
    r.label = *best;
  } else {
    std::optional<int> rank;
    for (const CategoryId l : img.labels()) {
      const int j = rank_of_label(l);
      if (!rank || j < *rank) {
        rank = j;
        r.label = l;
      }
    }
  }
  return r;
}

ObjectRegion identify_object_region_cls(const AnnotatedImage& img,
                                        const ClassificationOutcome& outcome,
                                        const LabelMapping& mapping, int top_k) {
  return identify_object_region(
      img,
      [&](CategoryId l) {
        return rank_of(outcome.probs, static_cast<CategoryId>(mapping.model_index(l))).j;
      },
      top_k);
}

// ---- suites ----------------------------------------------------------------

ReportDocument run_classification_suite(const Dataset& dataset, ModelClient& client,
                                        const HarnessConfig& config, const SuiteOptions& opts) {
  config.validate();
  const Handshake& hs = client.handshake();
  if (!hs.supports(Task::classify)) {
    throw CapabilityError("endpoint " + client.endpoint() + " does not offer classify");
  }
  const LabelMapping mapping = LabelMapping::resolve(dataset.labels, hs, config.label_remap);
  const MutationCatalog catalog = config.make_catalog();
  ReportDocument doc = new_document(Task::classify, client, config);
  auto& sum = doc.summary;

  for (const auto& img : dataset.images) {
    ++sum.images_total;
    try {
      const RasterImage src = load_source(img);
      const ClassificationOutcome out = client.classify(src);
      const ObjectRegion region = identify_object_region_cls(img, out, mapping, config.top_k_gate);
      if (!region.label_in_top_k) {
        continue;
      }
      ++sum.images_selected;
      const auto model_label = static_cast<CategoryId>(mapping.model_index(region.label));
      const LabelRank src_rank = rank_of(out.probs, model_label);

      const MutationTarget target = region.target();
      const auto pres = catalog.enumerate(MutationKind::preserving, target);
      const auto rem = catalog.enumerate(MutationKind::removing, target);
      const MutantSet mutants =
          build_mutants(catalog, src, target, pres, rem, config.mutation_threads);
      const auto fups = client.classify_batch(pointers(mutants.images));

      std::vector<ScoredOperation> scored;
      for (std::size_t i = 0; i < mutants.ops.size(); ++i) {
        const auto& w = *mutants.ops[i];
        const LabelRank fr = rank_of(fups[i].probs, model_label);
        const double d = w.op->kind() == MutationKind::preserving ? dist_cls_preserving(src_rank, fr)
                                                                  : dist_cls_removing(src_rank, fr);
        scored.push_back({w.op->operation_id, w.op->kind(), w.weight, d});
      }
      InferenceReport rep;
      rep.image_id = img.image_id;
      rep.task = Task::classify;
      rep.label = region.label;
      rep.label_name = dataset.labels.name(region.label);
      rep.p = src_rank.p;
      rep.j = src_rank.j;
      rep.score = aggregate_score(scored, mutants.inapplicable);
      rep.flagged = flag_classification(rep.p, rep.score.s, config.relevancy);
      rep.artifacts = write_artifacts(opts, config, img.image_id, mutants);
      sum.flagged += rep.flagged ? 1 : 0;
      doc.reports.push_back(std::move(rep));
    } catch (const TransportError& e) {
      sum.failures.emplace_back(img.image_id, e.what());
      ++sum.images_failed;
      sum.aborted = true;
      break;
    } catch (const std::exception& e) {
      sum.failures.emplace_back(img.image_id, e.what());
      ++sum.images_failed;
    }
  }
  return doc;
}

ReportDocument run_detection_suite(const Dataset& dataset, ModelClient& client,
                                   const HarnessConfig& config, const SuiteOptions& opts) {
  config.validate();
  const Handshake& hs = client.handshake();
  if (!hs.supports(Task::detect)) {
    throw CapabilityError("endpoint " + client.endpoint() + " does not offer detect");
  }
  const LabelMapping mapping = LabelMapping::resolve(dataset.labels, hs, config.label_remap);
  const MutationCatalog catalog = config.make_catalog();
  ReportDocument doc = new_document(Task::detect, client, config);
  auto& sum = doc.summary;

  for (const auto& img : dataset.images) {
    ++sum.images_total;
    try {
      const RasterImage src = load_source(img);
      const DetectionOutcome out = to_dataset_labels(client.detect(src), mapping);
      if (!out.records.empty()) {
        ++sum.images_selected;
      }
      for (std::size_t ri = 0; ri < out.records.size(); ++ri) {
        const DetectionRecord& rcd = out.records[ri];
        const auto aso = find_associated_object(rcd, img);
        if (!aso) {
          ++sum.records_without_associated_object;
          continue;
        }
        if (aso->iou_aso < config.relevancy.iou_threshold) {
          ++sum.records_below_iou_threshold;
          continue;
        }
        const ObjectRegion region = region_of_object(aso->gt_object, img.dims());
        const MutationTarget target = region.target();
        const auto pres = catalog.enumerate(MutationKind::preserving, target);
        const auto rem = catalog.enumerate(MutationKind::removing, target);
        const MutantSet mutants =
            build_mutants(catalog, src, target, pres, rem, config.mutation_threads);
        const auto fups = client.detect_batch(pointers(mutants.images));

        std::vector<ScoredOperation> scored;
        for (std::size_t i = 0; i < mutants.ops.size(); ++i) {
          const auto& w = *mutants.ops[i];
          const bool preserving = w.op->kind() == MutationKind::preserving;
          const FollowupMatch m = match_followup_record(
              *aso, to_dataset_labels(fups[i], mapping),
              preserving ? config.preserving_label_restrict : config.removing_label_restrict);
          const double d = preserving ? dist_det_preserving(aso->iou_aso, m.iou, m.label_match)
                                      : dist_det_removing(aso->iou_aso, m.iou);
          scored.push_back({w.op->operation_id, w.op->kind(), w.weight, d});
        }
        InferenceReport rep;
        rep.image_id = img.image_id;
        rep.task = Task::detect;
        rep.label = rcd.label;
        rep.label_name = dataset.labels.name(rcd.label);
        rep.record_index = ri;
        rep.object_id = aso->gt_object.object_id;
        rep.p = rcd.confidence;
        rep.iou_aso = aso->iou_aso;
        rep.score = aggregate_score(scored, mutants.inapplicable);
        rep.flagged = flag_detection(rep.iou_aso, rep.score.s, config.relevancy);
        rep.artifacts = write_artifacts(
            opts, config, img.image_id + "/record" + std::to_string(ri), mutants);
        sum.flagged += rep.flagged ? 1 : 0;
        doc.reports.push_back(std::move(rep));
      }
    } catch (const TransportError& e) {
      sum.failures.emplace_back(img.image_id, e.what());
      ++sum.images_failed;
      sum.aborted = true;
      break;
    } catch (const std::exception& e) {
      sum.failures.emplace_back(img.image_id, e.what());
      ++sum.images_failed;
    }
  }
  return doc;
}

}  // namespace orts
