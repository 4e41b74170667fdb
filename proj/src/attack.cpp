#include "orts/attack.hpp"

#include <algorithm>
#include <json.hpp>
#include <random>

#include "orts/relevancy.hpp"

namespace orts {

namespace {

RegionMask scale_mask(const RegionMask& m, Dims to) {
  RasterImage img(m.dims());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m.test(x, y)) {
        img.set_pixel(x, y, {255, 255, 255});
      }
    }
  }
  const RasterImage scaled = resize(img, to);
  RegionMask out(to);
  for (int y = 0; y < to.height; ++y) {
    for (int x = 0; x < to.width; ++x) {
      out.set(x, y, scaled.at(x, y, 0) >= 128);
    }
  }
  return out;
}

std::vector<std::size_t> order_by(const std::vector<ScoredImage>& v, bool use_sp) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    idx[i] = i;
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double ka = use_sp ? v[a].s_p : v[a].s_r;
    const double kb = use_sp ? v[b].s_p : v[b].s_r;
    if (ka != kb) {
      return ka < kb;
    }
    return v[a].image_id < v[b].image_id;
  });
  return idx;
}

CategoryId top1_of(const ClassificationOutcome& out, const LabelMapping& mapping) {
  const auto it = std::max_element(out.probs.begin(), out.probs.end());
  const auto model_index = static_cast<std::size_t>(it - out.probs.begin());
  return mapping.dataset_label(model_index).value_or(-1);
}

RegionMask candidate_region(const AnnotatedImage& img, CategoryId label) {
  RegionMask region(img.dims());
  for (const auto& obj : img.objects) {
    if (obj.label == label) {
      region = region | rasterize_region(obj, img.dims());
    }
  }
  if (!region.any() && !img.objects.empty()) {
    region = rasterize_region(img.objects.front(), img.dims());
  }
  return region;
}

}  // namespace

TransplantResult transplant(const RasterImage& donor, const RegionMask& donor_region,
                            const RasterImage& host, const RegionMask& host_region,
                            const ImagingParams& params) {
  if (donor.dims() != donor_region.dims() || host.dims() != host_region.dims()) {
    throw Error("transplant: region dimensions differ from their images");
  }
  const auto hb = host_region.tight_bbox();
  if (!hb || hb->w < 1 || hb->h < 1) {
    throw Error("transplant: host has no object region");
  }
  const auto db = donor_region.tight_bbox();
  if (!db) {
    throw Error("transplant: donor has no object region");
  }

  RasterImage crop(db->w, db->h);
  RegionMask crop_mask(db->w, db->h);
  for (int y = 0; y < db->h; ++y) {
    for (int x = 0; x < db->w; ++x) {
      crop.set_pixel(x, y, donor.pixel(db->x + x, db->y + y));
      crop_mask.set(x, y, donor_region.test(db->x + x, db->y + y));
    }
  }
  const double scale = std::min(static_cast<double>(hb->w) / db->w, static_cast<double>(hb->h) / db->h);
  const Dims sd{std::max(1, static_cast<int>(std::lround(db->w * scale))),
                std::max(1, static_cast<int>(std::lround(db->h * scale)))};
  const RasterImage scaled = resize(crop, sd);
  const RegionMask scaled_mask = scale_mask(crop_mask, sd);
  const int ox = hb->x + (hb->w - sd.width) / 2;
  const int oy = hb->y + (hb->h - sd.height) / 2;

  TransplantResult out;
  out.image = inpaint_diffusion(host, host_region, params.diffusion_iters);
  out.object_mask = RegionMask(host.dims());
  for (int y = 0; y < sd.height; ++y) {
    for (int x = 0; x < sd.width; ++x) {
      const int hx = ox + x;
      const int hy = oy + y;
      if (scaled_mask.test(x, y) && hx >= 0 && hy >= 0 && hx < host.width() && hy < host.height()) {
        out.image.set_pixel(hx, hy, scaled.pixel(x, y));
        out.object_mask.set(hx, hy);
      }
    }
  }
  out.image = median_filter(out.image, boundary_band(out.object_mask, params.band_width),
                            params.median_kernel);
  return out;
}

std::string_view to_string(Strategy s) { return s == Strategy::guided ? "guided" : "random"; }

Strategy parse_strategy(std::string_view s) {
  if (s == "guided") {
    return Strategy::guided;
  }
  if (s == "random") {
    return Strategy::random;
  }
  throw Error("unknown strategy '" + std::string(s) + "'");
}

std::vector<CandidatePair> guided_select(int scenario, const std::vector<ScoredImage>& candidates_a,
                                         const std::vector<ScoredImage>& candidates_b, std::size_t k) {
  if (scenario != 1 && scenario != 2) {
    throw Error("scenario must be 1 or 2");
  }
  std::vector<CandidatePair> out;
  if (candidates_a.empty() || candidates_b.empty() || k == 0) {
    return out;
  }
  const auto a = order_by(candidates_a, scenario == 1);
  const auto b = order_by(candidates_b, scenario != 1);
  std::vector<CandidatePair> product;
  product.reserve(a.size() * b.size());
  for (std::size_t d = 0; d + 2 <= a.size() + b.size(); ++d) {
    for (std::size_t i = 0; i <= d && i < a.size(); ++i) {
      const std::size_t j = d - i;
      if (j < b.size()) {
        product.emplace_back(a[i], b[j]);
      }
    }
  }
  for (std::size_t n = 0; n < k; ++n) {
    out.push_back(product[n % product.size()]);
  }
  return out;
}

std::vector<CandidatePair> random_select(const std::vector<ScoredImage>& candidates_a,
                                         const std::vector<ScoredImage>& candidates_b, std::size_t k,
                                         std::uint64_t seed) {
  std::vector<CandidatePair> out;
  if (candidates_a.empty() || candidates_b.empty() || k == 0) {
    return out;
  }
  std::vector<CandidatePair> pool;
  for (std::size_t i = 0; i < candidates_a.size(); ++i) {
    for (std::size_t j = 0; j < candidates_b.size(); ++j) {
      pool.emplace_back(i, j);
    }
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = pool.size() - 1; i > 0; --i) {
    std::swap(pool[i], pool[rng() % (i + 1)]);
  }
  for (std::size_t n = 0; n < k; ++n) {
    out.push_back(n < pool.size() ? pool[n] : pool[rng() % pool.size()]);
  }
  return out;
}

bool attack_succeeded(const AttackPair& pair, CategoryId top1) {
  return pair.scenario == 1 ? top1 != pair.label_a : top1 == pair.label_a;
}

AttackResult score_attack(const AttackPair& pair, Strategy strategy,
                          const std::vector<CategoryId>& top1) {
  AttackResult r;
  r.pair = pair;
  r.strategy = strategy;
  r.top1 = top1;
  r.attempts = static_cast<int>(top1.size());
  for (std::size_t i = 0; i < top1.size(); ++i) {
    if (attack_succeeded(pair, top1[i])) {
      ++r.successes;
      if (!r.first_success_index) {
        r.first_success_index = static_cast<int>(i);
      }
    }
  }
  return r;
}

std::vector<AttackPair> random_label_pairs(const std::vector<CategoryId>& labels, std::size_t count,
                                           int scenario, std::uint64_t seed) {
  std::vector<AttackPair> pool;
  for (const CategoryId a : labels) {
    for (const CategoryId b : labels) {
      if (a != b) {
        pool.push_back({a, b, scenario});
      }
    }
  }
  if (count > pool.size()) {
    throw Error("requested " + std::to_string(count) + " label pairs, only " +
                std::to_string(pool.size()) + " exist");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = pool.size() - 1; i > 0; --i) {
    std::swap(pool[i], pool[rng() % (i + 1)]);
  }
  pool.resize(count);
  return pool;
}

std::vector<AttackResult> run_attack_campaign(const std::vector<AttackPair>& pairs,
                                              const Dataset& dataset,
                                              const std::vector<ScoredImage>& scores,
                                              ModelClient& client,
                                              const AttackCampaignConfig& config) {
  const LabelMapping mapping =
      LabelMapping::resolve(dataset.labels, client.handshake(), config.label_remap);
  std::map<std::string, std::pair<RasterImage, RegionMask>> cache;
  const auto load = [&](const ScoredImage& s) -> const std::pair<RasterImage, RegionMask>& {
    auto it = cache.find(s.image_id);
    if (it == cache.end()) {
      const AnnotatedImage* img = dataset.find_image(s.image_id);
      if (!img) {
        throw Error("scored image " + s.image_id + " not in dataset");
      }
      it = cache.emplace(s.image_id, std::make_pair(read_png(img->path), candidate_region(*img, s.label)))
               .first;
    }
    return it->second;
  };

  std::vector<AttackResult> results;
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const AttackPair& pair = pairs[pi];
    std::vector<ScoredImage> a, b;
    for (const auto& s : scores) {
      if (dataset.find_image(s.image_id) == nullptr) {
        continue;
      }
      if (s.label == pair.label_a) {
        a.push_back(s);
      } else if (s.label == pair.label_b) {
        b.push_back(s);
      }
    }
    for (const Strategy strategy : config.strategies) {
      if (a.empty() || b.empty()) {
        AttackResult r;
        r.pair = pair;
        r.strategy = strategy;
        r.skipped_reason = std::string("no scored candidates for label ") +
                           std::to_string(a.empty() ? pair.label_a : pair.label_b);
        results.push_back(std::move(r));
        continue;
      }
      const auto k = static_cast<std::size_t>(std::max(0, config.attempts_per_pair));
      const auto chosen =
          strategy == Strategy::guided
              ? guided_select(pair.scenario, a, b, k)
              : random_select(a, b, k, config.seed ^ (0x9E3779B97F4A7C15ULL * (pi + 1)));
      std::vector<RasterImage> synth;
      synth.reserve(chosen.size());
      for (const auto& [ia, ib] : chosen) {
        const auto& donor = pair.scenario == 1 ? load(a[ia]) : load(b[ib]);
        const auto& host = pair.scenario == 1 ? load(b[ib]) : load(a[ia]);
        synth.push_back(
            transplant(donor.first, donor.second, host.first, host.second, config.imaging).image);
      }
      std::vector<const RasterImage*> ptrs;
      for (const auto& s : synth) {
        ptrs.push_back(&s);
      }
      const auto outs = client.classify_batch(ptrs);
      std::vector<CategoryId> top1;
      for (const auto& o : outs) {
        top1.push_back(top1_of(o, mapping));
      }
      results.push_back(score_attack(pair, strategy, top1));
    }
  }
  return results;
}

std::string attack_results_to_json(const std::vector<AttackResult>& results, std::uint64_t seed,
                                   const LabelMap& labels) {
  using ojson = nlohmann::ordered_json;
  const auto name = [&](CategoryId l) {
    return l >= 0 && static_cast<std::size_t>(l) < labels.size() ? labels.name(l) : std::string();
  };
  ojson doc;
  doc["schema_version"] = 1;
  doc["seed"] = seed;
  std::map<std::string, std::pair<int, int>> totals;
  ojson list = ojson::array();
  for (const auto& r : results) {
    ojson e;
    e["label_a"] = r.pair.label_a;
    e["label_b"] = r.pair.label_b;
    e["label_a_name"] = name(r.pair.label_a);
    e["label_b_name"] = name(r.pair.label_b);
    e["scenario"] = r.pair.scenario;
    e["strategy"] = to_string(r.strategy);
    e["attempts"] = r.attempts;
    e["successes"] = r.successes;
    e["first_success_index"] = r.first_success_index ? ojson(*r.first_success_index) : ojson(nullptr);
    e["top1"] = r.top1;
    if (!r.skipped_reason.empty()) {
      e["skipped_reason"] = r.skipped_reason;
    }
    auto& t = totals[std::string(to_string(r.strategy))];
    t.first += r.attempts;
    t.second += r.successes;
    list.push_back(std::move(e));
  }
  doc["results"] = std::move(list);
  ojson tot = ojson::object();
  for (const auto& [k, v] : totals) {
    tot[k] = {{"attempts", v.first}, {"successes", v.second}};
  }
  doc["totals"] = std::move(tot);
  return doc.dump(2) + "\n";
}

}  // namespace orts
