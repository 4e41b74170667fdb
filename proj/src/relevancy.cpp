#include "orts/relevancy.hpp"

#include <algorithm>
#include <cmath>

namespace orts {

LabelRank rank_of(std::span<const double> probs, CategoryId label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw Error("rank_of: label " + std::to_string(label) + " outside probability vector of size " +
                std::to_string(probs.size()));
  }
  const double p = probs[static_cast<std::size_t>(label)];
  int ahead = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto id = static_cast<CategoryId>(i);
    if (probs[i] > p || (probs[i] == p && id < label)) {
      ++ahead;
    }
  }
  return {label, p, ahead + 1};
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const std::int64_t ix = std::max(0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const std::int64_t iy = std::max(0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const std::int64_t inter = ix * iy;
  const std::int64_t uni = std::max<std::int64_t>(a.area(), 0) + std::max<std::int64_t>(b.area(), 0) - inter;
  if (uni <= 0) {
    throw Error("iou: empty union");
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double iou(const RegionMask& a, const RegionMask& b) {
  if (a.dims() != b.dims()) {
    throw Error("iou: mask dimension mismatch");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  const auto& x = a.bits();
  const auto& y = b.bits();
  for (std::size_t i = 0; i < x.size(); ++i) {
    inter += (x[i] & y[i]);
    uni += (x[i] | y[i]);
  }
  if (uni == 0) {
    throw Error("iou: empty union");
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double iou(const DetectionRecord& rcd, const GroundTruthObject& obj) {
  if (rcd.mask && obj.mask && rcd.mask->dims() == obj.mask->dims()) {
    return iou(*rcd.mask, *obj.mask);
  }
  return iou(rcd.bbox, obj.bbox);
}

double dist_cls_preserving(const LabelRank& src, const LabelRank& fup) {
  if (!(src.p > 0.0)) {
    throw Error("dist_cls_preserving: source probability is 0");
  }
  const double dp = std::max(0.0, src.p - fup.p) / src.p;
  const double dr = std::max(0.0, 1.0 / src.j - 1.0 / fup.j);
  return (1.0 - dp) * (1.0 - dr);
}

double dist_cls_removing(const LabelRank& src, const LabelRank& fup) {
  if (!(src.p > 0.0)) {
    throw Error("dist_cls_removing: source probability is 0");
  }
  const double dp = std::max(0.0, src.p - fup.p) / src.p;
  const double dr = std::max(0.0, 1.0 / src.j - 1.0 / fup.j);
  return dp * dr;
}

double dist_det_preserving(double iou_aso, double iou_fup, bool label_match) {
  if (!(iou_aso > 0.0)) {
    throw Error("dist_det_preserving: associated-object IOU is 0");
  }
  if (!label_match) {
    return 0.0;
  }
  return 1.0 - std::max(0.0, iou_aso - iou_fup) / iou_aso;
}

double dist_det_removing(double iou_aso, double iou_fup) {
  if (!(iou_aso > 0.0)) {
    throw Error("dist_det_removing: associated-object IOU is 0");
  }
  return std::max(0.0, iou_aso - iou_fup) / iou_aso;
}

std::optional<AssociatedObject> find_associated_object(const DetectionRecord& rcd,
                                                       const AnnotatedImage& gt) {
  const GroundTruthObject* best = nullptr;
  double best_iou = 0.0;
  for (const auto& obj : gt.objects) {
    if (obj.label != rcd.label) {
      continue;
    }
    const double v = iou(rcd, obj);
    if (v > best_iou || (best && v == best_iou && obj.object_id < best->object_id)) {
      best = &obj;
      best_iou = v;
    }
  }
  if (!best || best_iou <= 0.0) {
    return std::nullopt;
  }
  return AssociatedObject{*best, best_iou};
}

FollowupMatch match_followup_record(const AssociatedObject& aso, const DetectionOutcome& fup,
                                    bool label_restrict) {
  FollowupMatch m;
  double best_conf = 0.0;
  for (std::size_t i = 0; i < fup.records.size(); ++i) {
    const auto& r = fup.records[i];
    if (label_restrict && r.label != aso.gt_object.label) {
      continue;
    }
    const double v = iou(r, aso.gt_object);
    if (!m.record_index || v > m.iou || (v == m.iou && r.confidence > best_conf)) {
      m.iou = v;
      m.label_match = r.label == aso.gt_object.label;
      m.record_index = i;
      best_conf = r.confidence;
    }
  }
  return m;
}

RelevancyScore aggregate_score(const std::vector<ScoredOperation>& ops,
                               const std::set<std::string>& inapplicable) {
  std::vector<const ScoredOperation*> sorted;
  sorted.reserve(ops.size());
  for (const auto& op : ops) {
    sorted.push_back(&op);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->operation_id < b->operation_id; });

  RelevancyScore score;
  double wp = 0.0;
  double wr = 0.0;
  for (const auto* op : sorted) {
    if (!score.per_op_distances.emplace(op->operation_id, op->distance).second) {
      throw Error("aggregate_score: duplicate operation " + op->operation_id);
    }
    if (op->kind == MutationKind::preserving) {
      score.s_p += op->weight * op->distance;
      wp += op->weight;
    } else {
      score.s_r += op->weight * op->distance;
      wr += op->weight;
    }
  }
  if (std::abs(wp - 1.0) > 1e-9 || std::abs(wr - 1.0) > 1e-9) {
    throw Error("aggregate_score: weights must sum to 1 per kind (preserving " +
                std::to_string(wp) + ", removing " + std::to_string(wr) + ")");
  }
  score.s = (score.s_p + score.s_r) / 2.0;
  score.inapplicable_ops = inapplicable;
  return score;
}

void RelevancyConfig::validate() const {
  const auto check = [](double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) {
      throw Error(std::string(name) + " must lie in (0, 1)");
    }
  };
  check(prob_threshold, "prob_threshold");
  check(score_threshold, "score_threshold");
  check(iou_threshold, "iou_threshold");
}

bool flag_classification(double p, double s, const RelevancyConfig& cfg) {
  return p >= cfg.prob_threshold && s <= cfg.score_threshold;
}

bool flag_detection(double iou_aso, double s, const RelevancyConfig& cfg) {
  return iou_aso >= cfg.iou_threshold && s <= cfg.score_threshold;
}

}  // namespace orts
