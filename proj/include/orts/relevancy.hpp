#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "orts/annotations.hpp"
#include "orts/mutation.hpp"
#include "orts/protocol.hpp"

namespace orts {

struct LabelRank {
  CategoryId label = 0;
  double p = 0.0;
  /// 1-based position in descending-probability order; ties go to the
  /// smaller category id.
  int j = 1;
};

LabelRank rank_of(std::span<const double> probs, CategoryId label);
inline LabelRank rank_of(const ClassificationOutcome& outcome, CategoryId label) {
  return rank_of(outcome.probs, label);
}

/// Intersection over union. Throws when the union is empty.
double iou(const BoundingBox& a, const BoundingBox& b);
double iou(const RegionMask& a, const RegionMask& b);

/// IOU between a detection and a ground-truth object: mask IOU when both
/// carry masks, box IOU otherwise.
double iou(const DetectionRecord& rcd, const GroundTruthObject& obj);

double dist_cls_preserving(const LabelRank& src, const LabelRank& fup);
double dist_cls_removing(const LabelRank& src, const LabelRank& fup);
double dist_det_preserving(double iou_aso, double iou_fup, bool label_match);
double dist_det_removing(double iou_aso, double iou_fup);

struct AssociatedObject {
  GroundTruthObject gt_object;
  double iou_aso = 0.0;
};

/// Same-label ground-truth object with the highest IOU; ties go to the
/// smaller object id. nullopt when nothing of that label overlaps.
std::optional<AssociatedObject> find_associated_object(const DetectionRecord& rcd,
                                                       const AnnotatedImage& gt);

struct FollowupMatch {
  double iou = 0.0;
  bool label_match = false;
  std::optional<std::size_t> record_index;
};

/// Follow-up record with the highest IOU against the associated object
/// (ties: higher confidence, then lower index). With `label_restrict` only
/// records carrying the associated object's label are candidates.
FollowupMatch match_followup_record(const AssociatedObject& aso, const DetectionOutcome& fup,
                                    bool label_restrict);

struct ScoredOperation {
  std::string operation_id;
  MutationKind kind = MutationKind::preserving;
  double weight = 0.0;
  double distance = 0.0;
};

struct RelevancyScore {
  double s_p = 0.0;
  double s_r = 0.0;
  double s = 0.0;
  std::map<std::string, double> per_op_distances;
  std::set<std::string> inapplicable_ops;

  friend bool operator==(const RelevancyScore&, const RelevancyScore&) = default;
};

/// S_p and S_r are weighted sums over each kind (summed in operation-id
/// order), S their mean. Weights must sum to 1 per kind within 1e-9.
RelevancyScore aggregate_score(const std::vector<ScoredOperation>& ops,
                               const std::set<std::string>& inapplicable = {});

struct RelevancyConfig {
  double prob_threshold = 0.5;
  double score_threshold = 0.5;
  double iou_threshold = 0.5;

  /// Throws unless every threshold lies in (0, 1).
  void validate() const;
};

bool flag_classification(double p, double s, const RelevancyConfig& cfg);
bool flag_detection(double iou_aso, double s, const RelevancyConfig& cfg);

}  // namespace orts
