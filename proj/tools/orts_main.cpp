#include <glob.h>

#include <CLI11.hpp>
#include <algorithm>
#include <csignal>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "orts/attack.hpp"
#include "orts/harness.hpp"
#include "orts/mockmodel.hpp"

namespace {

using namespace orts;

void write_file(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + file.string());
  }
  out << text;
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw Error("cannot read " + file.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::filesystem::path> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<std::filesystem::path> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) {
      out.emplace_back(g.gl_pathv[i]);
    }
  }
  globfree(&g);
  return out;
}

struct SuiteArgs {
  std::string dataset;
  std::string image_root;
  std::string endpoint;
  std::string config;
  std::string out;
  bool keep_artifacts = false;
};

int run_suite(Task task, const SuiteArgs& a) {
  HarnessConfig cfg = a.config.empty() ? HarnessConfig{} : HarnessConfig::load(a.config);
  if (a.keep_artifacts) {
    cfg.keep_artifacts = true;
  }
  const Dataset ds = load_dataset_spec(
      a.dataset, a.image_root.empty() ? std::nullopt : std::optional<std::filesystem::path>(a.image_root));
  ModelClient client(a.endpoint, cfg.client_options());
  SuiteOptions opts;
  if (cfg.keep_artifacts) {
    opts.artifact_dir = std::filesystem::path(a.out) / "artifacts";
  }
  ReportDocument doc = task == Task::classify ? run_classification_suite(ds, client, cfg, opts)
                                              : run_detection_suite(ds, client, cfg, opts);
  doc.metadata.generated_at = utc_timestamp();
  doc.metadata.dataset = a.dataset;
  doc.metadata.endpoint = a.endpoint;
  doc.metadata.model = client.handshake().model_name;
  doc.metadata.config_json = cfg.to_json();
  emit_report(doc, a.out);
  const auto& s = doc.summary;
  std::cout << "images " << s.images_total << ", selected " << s.images_selected << ", scored "
            << doc.reports.size() << ", flagged " << s.flagged << ", failed " << s.images_failed
            << (s.aborted ? " (aborted)" : "") << "\n";
  for (const auto& [id, msg] : s.failures) {
    std::cerr << "  " << id << ": " << msg << "\n";
  }
  return s.aborted || s.images_failed > 0 ? 1 : 0;
}

// "box:x,y,w,h" or "png:<file>" (nonzero pixels are inside).
MutationTarget parse_mask_spec(const std::string& spec, Dims dims) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw Error("mask spec must be box:x,y,w,h or png:<file>");
  }
  const std::string kind = spec.substr(0, colon);
  const std::string arg = spec.substr(colon + 1);
  MutationTarget t;
  if (kind == "box") {
    BoundingBox b;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream in(arg);
    if (!(in >> b.x >> c1 >> b.y >> c2 >> b.w >> c3 >> b.h) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw Error("bad box spec '" + arg + "'");
    }
    t.region = RegionMask::from_box(dims, b);
    t.bbox = b;
    t.has_mask = false;
  } else if (kind == "png") {
    const RasterImage m = read_png(arg);
    if (m.dims() != dims) {
      throw Error("mask size differs from image size");
    }
    t.region = RegionMask(dims);
    for (int y = 0; y < dims.height; ++y) {
      for (int x = 0; x < dims.width; ++x) {
        const Rgb p = m.pixel(x, y);
        t.region.set(x, y, p.r || p.g || p.b);
      }
    }
    const auto b = t.region.tight_bbox();
    if (!b) {
      throw Error("mask is empty");
    }
    t.bbox = *b;
    t.has_mask = true;
  } else {
    throw Error("unknown mask kind '" + kind + "'");
  }
  return t;
}

CategoryId resolve_label(const nlohmann::json& v, const LabelMap& labels) {
  if (v.is_number_integer()) {
    return v.get<CategoryId>();
  }
  const auto id = labels.find(v.get<std::string>());
  if (!id) {
    throw Error("unknown label '" + v.get<std::string>() + "'");
  }
  return *id;
}

ProtocolServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-relevancy testing for image models"};
  app.require_subcommand(1);

  SuiteArgs cls, det;
  for (auto [name, args, help] :
       {std::tuple{"classify-suite", &cls, "Score a classifier over a dataset"},
        std::tuple{"detect-suite", &det, "Score a detector over a dataset"}}) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--dataset", args->dataset, "coco:<file>, voc:<dir> or fixture:<file>")->required();
    sub->add_option("--image-root", args->image_root, "Image directory for coco/voc");
    sub->add_option("--endpoint", args->endpoint, "Model endpoint URL")->required();
    sub->add_option("--config", args->config, "Config JSON file");
    sub->add_option("--out", args->out, "Output directory")->required();
    sub->add_flag("--keep-artifacts", args->keep_artifacts, "Write follow-up PNGs");
  }

  std::string agg_reports, agg_out;
  auto* agg = app.add_subcommand("aggregate", "Combine per-model reports");
  agg->add_option("--reports", agg_reports, "Glob matching report.json files")->required();
  agg->add_option("--out", agg_out, "Output directory")->required();

  std::string mut_image, mut_mask, mut_op, mut_out, mut_bg;
  auto* mut = app.add_subcommand("mutate", "Apply one mutation operation");
  mut->add_option("--image", mut_image, "Source PNG")->required();
  mut->add_option("--mask", mut_mask, "box:x,y,w,h or png:<file>")->required();
  mut->add_option("--op", mut_op, "Operation id, e.g. RmvObjByRGB/black")->required();
  mut->add_option("--out", mut_out, "Output PNG")->required();
  mut->add_option("--background-dir", mut_bg, "Directory of 12 background PNGs");

  int atk_scenario = 1;
  std::size_t atk_pairs = 10;
  std::string atk_pairs_file, atk_strategy = "guided,random", atk_scores, atk_dataset, atk_image_root,
                              atk_endpoint, atk_out, atk_config;
  int atk_attempts = 20;
  std::uint64_t atk_seed = 1;
  auto* atk = app.add_subcommand("attack", "Transplant campaign between label pairs");
  atk->add_option("--scenario", atk_scenario, "1 or 2")->check(CLI::IsMember({1, 2}));
  auto* pairs_opt = atk->add_option("--pairs", atk_pairs, "Number of random label pairs");
  atk->add_option("--pairs-file", atk_pairs_file, "JSON list of {label_a, label_b}")->excludes(pairs_opt);
  atk->add_option("--attempts", atk_attempts, "Syntheses per pair")->check(CLI::PositiveNumber);
  atk->add_option("--strategy", atk_strategy, "Comma list of guided, random");
  atk->add_option("--scores", atk_scores, "Classification report.json with S_p/S_r")->required();
  atk->add_option("--dataset", atk_dataset, "Dataset the report was produced on")->required();
  atk->add_option("--image-root", atk_image_root, "Image directory for coco/voc");
  atk->add_option("--endpoint", atk_endpoint, "Model endpoint URL")->required();
  atk->add_option("--config", atk_config, "Config JSON file");
  atk->add_option("--seed", atk_seed, "PRNG seed");
  atk->add_option("--out", atk_out, "Output directory")->required();

  std::string mock_kind, mock_fixtures, mock_host = "127.0.0.1";
  int mock_port = 8080;
  auto* serve = app.add_subcommand("serve-mock", "Serve a fixture mock model");
  serve->add_option("--kind", mock_kind, "object-keyed, background-keyed or scripted")->required();
  serve->add_option("--fixtures", mock_fixtures, "Directory holding fixture.json")->required();
  serve->add_option("--host", mock_host, "Bind address");
  serve->add_option("--port", mock_port, "Port (0 picks one)");

  std::string fx_set, fx_out;
  std::uint64_t fx_seed = 0;
  auto* fx = app.add_subcommand("make-fixtures", "Write a mock fixture set");
  fx->add_option("--set", fx_set, "relevancy, detection or attack")
      ->required()
      ->check(CLI::IsMember({"relevancy", "detection", "attack"}));
  fx->add_option("--out", fx_out, "Output directory")->required();
  fx->add_option("--seed", fx_seed, "Generator seed (0 keeps the set default)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("classify-suite")) {
      return run_suite(Task::classify, cls);
    }
    if (app.got_subcommand("detect-suite")) {
      return run_suite(Task::detect, det);
    }
    if (*agg) {
      auto files = expand_glob(agg_reports);
      if (files.empty()) {
        throw Error("no reports match " + agg_reports);
      }
      std::vector<ReportDocument> docs;
      for (const auto& f : files) {
        docs.push_back(load_report(f));
      }
      std::filesystem::create_directories(agg_out);
      write_file(std::filesystem::path(agg_out) / "summary.json",
                 campaign_summary_to_json(aggregate_multi_model(docs)));
      std::cout << "aggregated " << docs.size() << " reports\n";
      return 0;
    }
    if (*mut) {
      const RasterImage img = read_png(mut_image);
      const MutationCatalog catalog(
          mut_bg.empty() ? BackgroundLibrary::procedural() : BackgroundLibrary::from_directory(mut_bg));
      const MutationOperation* op = catalog.find(mut_op);
      if (!op) {
        throw Error("unknown operation '" + mut_op + "'");
      }
      const auto result = catalog.apply(*op, img, parse_mask_spec(mut_mask, img.dims()));
      if (const auto* na = std::get_if<Inapplicable>(&result)) {
        std::cerr << mut_op << " not applicable: " << na->reason << "\n";
        return 2;
      }
      write_png(std::get<RasterImage>(result), mut_out);
      return 0;
    }
    if (*atk) {
      const HarnessConfig cfg = atk_config.empty() ? HarnessConfig{} : HarnessConfig::load(atk_config);
      const Dataset ds = load_dataset_spec(
          atk_dataset,
          atk_image_root.empty() ? std::nullopt : std::optional<std::filesystem::path>(atk_image_root));
      const ReportDocument report = load_report(atk_scores);
      if (report.task != Task::classify) {
        throw Error("attack scores must come from a classification report");
      }
      std::vector<ScoredImage> scores;
      std::set<CategoryId> label_set;
      for (const auto& r : report.reports) {
        scores.push_back({r.image_id, r.label, r.score.s_p, r.score.s_r});
        label_set.insert(r.label);
      }
      std::vector<AttackPair> pairs;
      if (!atk_pairs_file.empty()) {
        for (const auto& e : nlohmann::json::parse(read_file(atk_pairs_file))) {
          pairs.push_back({resolve_label(e.at("label_a"), ds.labels),
                           resolve_label(e.at("label_b"), ds.labels), atk_scenario});
        }
      } else {
        pairs = random_label_pairs({label_set.begin(), label_set.end()}, atk_pairs, atk_scenario,
                                   atk_seed);
      }
      AttackCampaignConfig ac;
      ac.strategies.clear();
      std::stringstream ss(atk_strategy);
      for (std::string s; std::getline(ss, s, ',');) {
        ac.strategies.push_back(parse_strategy(s));
      }
      ac.attempts_per_pair = atk_attempts;
      ac.seed = atk_seed;
      ac.imaging = cfg.imaging;
      ac.label_remap = cfg.label_remap;
      ac.client = cfg.client_options();
      ModelClient client(atk_endpoint, ac.client);
      const auto results = run_attack_campaign(pairs, ds, scores, client, ac);
      std::filesystem::create_directories(atk_out);
      write_file(std::filesystem::path(atk_out) / "attack.json",
                 attack_results_to_json(results, atk_seed, ds.labels));
      std::map<std::string, std::pair<int, int>> totals;
      for (const auto& r : results) {
        auto& t = totals[std::string(to_string(r.strategy))];
        t.first += r.successes;
        t.second += r.attempts;
      }
      for (const auto& [k, v] : totals) {
        std::cout << k << ": " << v.first << "/" << v.second << " successful\n";
      }
      return 0;
    }
    if (*serve) {
      const Dataset ds = load_fixture(std::filesystem::path(mock_fixtures) / "fixture.json");
      MockModel model(parse_mock_kind(mock_kind), MockRegistry::from_dataset(ds));
      ProtocolServer server(model.backend());
      g_server = &server;
      std::signal(SIGINT, [](int) { g_server->stop(); });
      std::signal(SIGTERM, [](int) { g_server->stop(); });
      std::cout << "serving " << mock_kind << " mock on " << mock_host << ":" << mock_port << std::endl;
      server.run(mock_host, mock_port);
      return 0;
    }
    if (*fx) {
      Dataset ds;
      if (fx_set == "relevancy") {
        ds = fx_seed ? make_relevancy_fixtures(fx_out, fx_seed) : make_relevancy_fixtures(fx_out);
      } else if (fx_set == "detection") {
        ds = fx_seed ? make_detection_fixtures(fx_out, fx_seed) : make_detection_fixtures(fx_out);
      } else {
        ds = fx_seed ? make_attack_fixtures(fx_out, fx_seed) : make_attack_fixtures(fx_out);
      }
      std::cout << "wrote " << ds.images.size() << " images to " << fx_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
