#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orts/annotations.hpp"
#include "orts/mutation.hpp"
#include "orts/protocol.hpp"
#include "orts/relevancy.hpp"

namespace orts {

struct HarnessConfig {
  RelevancyConfig relevancy;
  int top_k_gate = 5;
  int inflight = 4;
  /// Threads generating mutations; 0 means hardware concurrency.
  int mutation_threads = 0;
  bool keep_artifacts = false;
  std::optional<std::filesystem::path> background_dir;
  bool removing_label_restrict = true;
  bool preserving_label_restrict = false;
  std::chrono::milliseconds timeout{30'000};
  ImagingParams imaging;
  /// Dataset label name -> model label name; needed when the lists differ.
  std::map<std::string, std::string> label_remap;

  /// Unknown keys are rejected. Missing keys keep their defaults.
  static HarnessConfig from_json(const std::string& text);
  static HarnessConfig load(const std::filesystem::path& file);
  std::string to_json() const;
  void validate() const;

  ClientOptions client_options() const { return {timeout, inflight}; }
  MutationCatalog make_catalog() const;
};

/// The region a suite mutates for one inference.
struct ObjectRegion {
  RegionMask region;
  BoundingBox bbox;
  bool has_mask = false;
  CategoryId label = 0;
  std::vector<ObjectId> object_ids;
  /// False when no ground-truth label made the top-k and the union of all
  /// objects was taken.
  bool label_in_top_k = true;

  MutationTarget target() const { return {region, bbox, has_mask}; }
};

/// Picks the object whose label ranks best among the model's top-k (all
/// objects of that label when it repeats); otherwise the union of every
/// object. `rank_of_label` maps a dataset label to its 1-based model rank.
ObjectRegion identify_object_region(const AnnotatedImage& img,
                                    const std::function<int(CategoryId)>& rank_of_label, int top_k);
ObjectRegion identify_object_region_cls(const AnnotatedImage& img,
                                        const ClassificationOutcome& outcome,
                                        const LabelMapping& mapping, int top_k);
ObjectRegion region_of_object(const GroundTruthObject& obj, Dims dims);

struct InferenceReport {
  std::string image_id;
  Task task = Task::classify;
  CategoryId label = 0;
  std::string label_name;
  /// Detection only: index of the source record and its associated object.
  std::optional<std::size_t> record_index;
  std::optional<ObjectId> object_id;
  /// Classification: probability of the label. Detection: record confidence.
  double p = 0.0;
  /// Classification rank; 0 for detection.
  int j = 0;
  /// Detection only.
  double iou_aso = 0.0;
  RelevancyScore score;
  bool flagged = false;
  std::vector<std::string> artifacts;
};

struct SuiteSummary {
  std::size_t images_total = 0;
  /// Passed the top-k gate (classification) or produced a record (detection).
  std::size_t images_selected = 0;
  std::size_t images_failed = 0;
  std::size_t records_without_associated_object = 0;
  std::size_t records_below_iou_threshold = 0;
  std::size_t flagged = 0;
  bool aborted = false;
  std::vector<std::pair<std::string, std::string>> failures;
};

struct ReportMetadata {
  std::string generated_at;
  std::string dataset;
  std::string model;
  std::string endpoint;
  std::string config_json;
};

struct ReportDocument {
  static constexpr int kSchemaVersion = 1;
  int schema_version = kSchemaVersion;
  Task task = Task::classify;
  ReportMetadata metadata;
  SuiteSummary summary;
  std::vector<InferenceReport> reports;
};

/// Optional hooks for progress and artifacts; all may be left empty.
struct SuiteOptions {
  std::optional<std::filesystem::path> artifact_dir;
};

ReportDocument run_classification_suite(const Dataset& dataset, ModelClient& client,
                                        const HarnessConfig& config, const SuiteOptions& opts = {});
ReportDocument run_detection_suite(const Dataset& dataset, ModelClient& client,
                                   const HarnessConfig& config, const SuiteOptions& opts = {});

/// Report serialization. Numbers carry 6 decimals; the body (everything but
/// `metadata`) is byte-stable across identical runs.
std::string report_to_json(const ReportDocument& doc);
std::string report_body_json(const ReportDocument& doc);
std::string report_to_csv(const ReportDocument& doc);
ReportDocument report_from_json(const std::string& text);
ReportDocument load_report(const std::filesystem::path& file);
/// Writes report.json and report.csv into `dir`.
void emit_report(const ReportDocument& doc, const std::filesystem::path& dir);

struct ModelFlagCounts {
  std::string model;
  std::size_t flagged = 0;
  std::size_t total_correct = 0;   // scored reports
  std::size_t total_selected = 0;  // gated in, including failures
  double percentage = 0.0;              // flagged / total_correct
  double percentage_of_selected = 0.0;  // flagged / total_selected
};

struct CampaignSummary {
  std::vector<ModelFlagCounts> models;
  /// Occurrence count (models flagging an image) -> number of images.
  std::map<std::size_t, std::size_t> occurrence_histogram;
  /// Image id -> number of models that flagged it.
  std::map<std::string, std::size_t> occurrences;
  /// Label name -> number of images flagged by every model.
  std::map<std::string, std::size_t> always_flagged_by_label;
};

CampaignSummary aggregate_multi_model(const std::vector<ReportDocument>& per_model);
std::string campaign_summary_to_json(const CampaignSummary& summary);

std::string utc_timestamp();

}  // namespace orts
