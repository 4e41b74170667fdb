#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "orts/annotations.hpp"
#include "orts/imaging.hpp"
#include "orts/protocol.hpp"

namespace orts {

struct TransplantResult {
  RasterImage image;
  /// Where the donor object landed, in host coordinates.
  RegionMask object_mask;
};

/// Cuts the donor object out by its mask, scales it to fit the host bbox
/// (aspect kept, centered), inpaints the host object away and composites the
/// donor over it with a median-blurred seam.
TransplantResult transplant(const RasterImage& donor, const RegionMask& donor_region,
                            const RasterImage& host, const RegionMask& host_region,
                            const ImagingParams& params = {});

/// One candidate image with the relevancy scores that drive guided ordering.
struct ScoredImage {
  std::string image_id;
  CategoryId label = 0;
  double s_p = 0.0;
  double s_r = 0.0;
};

struct AttackPair {
  CategoryId label_a = 0;
  CategoryId label_b = 0;
  int scenario = 1;
};

enum class Strategy { guided, random };
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

/// (index into candidates_a, index into candidates_b).
using CandidatePair = std::pair<std::size_t, std::size_t>;

/// Scenario 1 orders A by ascending S_p and B by ascending S_r; scenario 2
/// swaps the keys. Ties fall back to image id. The ordered product is walked
/// by anti-diagonals (i + j, then i), so early attempts favour both lists'
/// heads. Past the end of the product the order repeats.
std::vector<CandidatePair> guided_select(int scenario, const std::vector<ScoredImage>& candidates_a,
                                         const std::vector<ScoredImage>& candidates_b, std::size_t k);

/// Seeded shuffle of the same product; once exhausted, uniform draws with
/// replacement.
std::vector<CandidatePair> random_select(const std::vector<ScoredImage>& candidates_a,
                                         const std::vector<ScoredImage>& candidates_b, std::size_t k,
                                         std::uint64_t seed);

/// Success rule on a top-1 label: scenario 1 wants anything but label_a,
/// scenario 2 wants label_a.
bool attack_succeeded(const AttackPair& pair, CategoryId top1);

struct AttackResult {
  AttackPair pair;
  Strategy strategy = Strategy::guided;
  int attempts = 0;
  int successes = 0;
  std::optional<int> first_success_index;
  std::vector<CategoryId> top1;
  std::string skipped_reason;
};

/// Replays a top-1 sequence against the success rule.
AttackResult score_attack(const AttackPair& pair, Strategy strategy,
                          const std::vector<CategoryId>& top1);

/// `count` distinct ordered label pairs (a != b) drawn with a seeded PRNG.
std::vector<AttackPair> random_label_pairs(const std::vector<CategoryId>& labels, std::size_t count,
                                           int scenario, std::uint64_t seed);

struct AttackCampaignConfig {
  std::vector<Strategy> strategies{Strategy::guided, Strategy::random};
  int attempts_per_pair = 20;
  std::uint64_t seed = 1;
  ImagingParams imaging;
  std::map<std::string, std::string> label_remap;
  ClientOptions client;
};

/// Runs every pair under every strategy. `scores` must cover the candidate
/// images of `dataset`; each candidate's object region is its single (or
/// first) ground-truth object.
std::vector<AttackResult> run_attack_campaign(const std::vector<AttackPair>& pairs,
                                              const Dataset& dataset,
                                              const std::vector<ScoredImage>& scores,
                                              ModelClient& client,
                                              const AttackCampaignConfig& config);

std::string attack_results_to_json(const std::vector<AttackResult>& results, std::uint64_t seed,
                                   const LabelMap& labels);

}  // namespace orts
