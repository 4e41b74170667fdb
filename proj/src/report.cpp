#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "orts/harness.hpp"

namespace orts {

using ojson = nlohmann::ordered_json;

namespace {

double r6(double v) {
  const double r = std::round(v * 1e6) / 1e6;
  return r == 0.0 ? 0.0 : r;  // no "-0.0"
}

ojson report_entry(const InferenceReport& r) {
  ojson e;
  e["image_id"] = r.image_id;
  e["task"] = to_string(r.task);
  e["label"] = r.label;
  e["label_name"] = r.label_name;
  e["record_index"] = r.record_index ? ojson(*r.record_index) : ojson(nullptr);
  e["object_id"] = r.object_id ? ojson(*r.object_id) : ojson(nullptr);
  e["p"] = r6(r.p);
  e["j"] = r.j;
  e["iou_aso"] = r6(r.iou_aso);
  e["s_p"] = r6(r.score.s_p);
  e["s_r"] = r6(r.score.s_r);
  e["s"] = r6(r.score.s);
  e["flagged"] = r.flagged;
  ojson per_op = ojson::object();
  for (const auto& [id, d] : r.score.per_op_distances) {
    per_op[id] = r6(d);
  }
  e["per_op"] = std::move(per_op);
  e["inapplicable"] = r.score.inapplicable_ops;
  e["artifacts"] = r.artifacts;
  return e;
}

ojson summary_entry(const SuiteSummary& s) {
  ojson e;
  e["images_total"] = s.images_total;
  e["images_selected"] = s.images_selected;
  e["images_failed"] = s.images_failed;
  e["records_without_associated_object"] = s.records_without_associated_object;
  e["records_below_iou_threshold"] = s.records_below_iou_threshold;
  e["flagged"] = s.flagged;
  e["aborted"] = s.aborted;
  ojson failures = ojson::array();
  for (const auto& [id, msg] : s.failures) {
    failures.push_back({{"image_id", id}, {"error", msg}});
  }
  e["failures"] = std::move(failures);
  return e;
}

ojson body(const ReportDocument& doc) {
  ojson b;
  b["schema_version"] = doc.schema_version;
  b["task"] = to_string(doc.task);
  b["summary"] = summary_entry(doc.summary);
  ojson reports = ojson::array();
  for (const auto& r : doc.reports) {
    reports.push_back(report_entry(r));
  }
  b["reports"] = std::move(reports);
  return b;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) {
    return s;
  }
  std::string out = "\"";
  for (const char c : s) {
    out += c;
    if (c == '"') {
      out += '"';
    }
  }
  return out + "\"";
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", r6(v));
  return buf;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + file.string());
  }
  out << text;
}

}  // namespace

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string report_body_json(const ReportDocument& doc) { return body(doc).dump(2); }

std::string report_to_json(const ReportDocument& doc) {
  ojson out;
  out["schema_version"] = doc.schema_version;
  ojson meta;
  meta["generated_at"] = doc.metadata.generated_at;
  meta["dataset"] = doc.metadata.dataset;
  meta["model"] = doc.metadata.model;
  meta["endpoint"] = doc.metadata.endpoint;
  meta["config"] = doc.metadata.config_json.empty() ? ojson::object()
                                                    : ojson::parse(doc.metadata.config_json);
  out["metadata"] = std::move(meta);
  const ojson b = body(doc);
  for (const auto& [k, v] : b.items()) {
    if (k != "schema_version") {
      out[k] = v;
    }
  }
  return out.dump(2) + "\n";
}

std::string report_to_csv(const ReportDocument& doc) {
  std::ostringstream out;
  out << "image_id,task,label,label_name,record_index,object_id,p,j,iou_aso,s_p,s_r,s,flagged\n";
  for (const auto& r : doc.reports) {
    out << csv_escape(r.image_id) << ',' << to_string(r.task) << ',' << r.label << ','
        << csv_escape(r.label_name) << ',' << (r.record_index ? std::to_string(*r.record_index) : "")
        << ',' << (r.object_id ? std::to_string(*r.object_id) : "") << ',' << fixed6(r.p) << ','
        << r.j << ',' << fixed6(r.iou_aso) << ',' << fixed6(r.score.s_p) << ','
        << fixed6(r.score.s_r) << ',' << fixed6(r.score.s) << ',' << (r.flagged ? 1 : 0) << '\n';
  }
  return out.str();
}

ReportDocument report_from_json(const std::string& text) {
  ReportDocument doc;
  try {
    const auto j = nlohmann::json::parse(text);
    doc.schema_version = j.at("schema_version").get<int>();
    if (doc.schema_version != ReportDocument::kSchemaVersion) {
      throw Error("unsupported report schema_version " + std::to_string(doc.schema_version));
    }
    doc.task = parse_task(j.at("task").get<std::string>());
    if (const auto m = j.find("metadata"); m != j.end()) {
      doc.metadata.generated_at = m->value("generated_at", "");
      doc.metadata.dataset = m->value("dataset", "");
      doc.metadata.model = m->value("model", "");
      doc.metadata.endpoint = m->value("endpoint", "");
      if (const auto c = m->find("config"); c != m->end()) {
        doc.metadata.config_json = c->dump();
      }
    }
    const auto& s = j.at("summary");
    auto& sum = doc.summary;
    sum.images_total = s.at("images_total").get<std::size_t>();
    sum.images_selected = s.at("images_selected").get<std::size_t>();
    sum.images_failed = s.at("images_failed").get<std::size_t>();
    sum.records_without_associated_object = s.at("records_without_associated_object").get<std::size_t>();
    sum.records_below_iou_threshold = s.at("records_below_iou_threshold").get<std::size_t>();
    sum.flagged = s.at("flagged").get<std::size_t>();
    sum.aborted = s.at("aborted").get<bool>();
    for (const auto& f : s.at("failures")) {
      sum.failures.emplace_back(f.at("image_id").get<std::string>(), f.at("error").get<std::string>());
    }
    for (const auto& e : j.at("reports")) {
      InferenceReport r;
      r.image_id = e.at("image_id").get<std::string>();
      r.task = parse_task(e.at("task").get<std::string>());
      r.label = e.at("label").get<CategoryId>();
      r.label_name = e.at("label_name").get<std::string>();
      if (!e.at("record_index").is_null()) {
        r.record_index = e.at("record_index").get<std::size_t>();
      }
      if (!e.at("object_id").is_null()) {
        r.object_id = e.at("object_id").get<ObjectId>();
      }
      r.p = e.at("p").get<double>();
      r.j = e.at("j").get<int>();
      r.iou_aso = e.at("iou_aso").get<double>();
      r.score.s_p = e.at("s_p").get<double>();
      r.score.s_r = e.at("s_r").get<double>();
      r.score.s = e.at("s").get<double>();
      r.flagged = e.at("flagged").get<bool>();
      r.score.per_op_distances = e.at("per_op").get<std::map<std::string, double>>();
      r.score.inapplicable_ops = e.at("inapplicable").get<std::set<std::string>>();
      r.artifacts = e.at("artifacts").get<std::vector<std::string>>();
      doc.reports.push_back(std::move(r));
    }
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("report: ") + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what(), 0);
  }
  return doc;
}

ReportDocument load_report(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw Error("cannot read report " + file.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

void emit_report(const ReportDocument& doc, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_to_json(doc));
  write_text(dir / "report.csv", report_to_csv(doc));
}

CampaignSummary aggregate_multi_model(const std::vector<ReportDocument>& per_model) {
  CampaignSummary out;
  std::map<std::string, std::string> label_of;
  for (const auto& doc : per_model) {
    ModelFlagCounts c;
    c.model = doc.metadata.model.empty() ? doc.metadata.endpoint : doc.metadata.model;
    std::set<std::string> flagged_images;
    std::set<std::string> scored_images;
    for (const auto& r : doc.reports) {
      scored_images.insert(r.image_id);
      if (r.flagged) {
        flagged_images.insert(r.image_id);
        label_of.emplace(r.image_id, r.label_name);
      }
    }
    c.flagged = flagged_images.size();
    c.total_correct = scored_images.size();
    c.total_selected = doc.summary.images_selected;
    c.percentage = c.total_correct ? static_cast<double>(c.flagged) / c.total_correct : 0.0;
    c.percentage_of_selected =
        c.total_selected ? static_cast<double>(c.flagged) / c.total_selected : 0.0;
    for (const auto& id : flagged_images) {
      ++out.occurrences[id];
    }
    out.models.push_back(std::move(c));
  }
  for (const auto& [id, n] : out.occurrences) {
    ++out.occurrence_histogram[n];
    if (n == per_model.size()) {
      ++out.always_flagged_by_label[label_of.at(id)];
    }
  }
  return out;
}

std::string campaign_summary_to_json(const CampaignSummary& summary) {
  ojson out;
  out["schema_version"] = ReportDocument::kSchemaVersion;
  ojson models = ojson::array();
  for (const auto& m : summary.models) {
    models.push_back({{"model", m.model},
                      {"flagged", m.flagged},
                      {"total_correct", m.total_correct},
                      {"total_selected", m.total_selected},
                      {"percentage", r6(m.percentage)},
                      {"percentage_of_selected", r6(m.percentage_of_selected)}});
  }
  out["models"] = std::move(models);
  ojson hist = ojson::object();
  for (const auto& [k, v] : summary.occurrence_histogram) {
    hist[std::to_string(k)] = v;
  }
  out["occurrence_histogram"] = std::move(hist);
  out["occurrences"] = summary.occurrences;
  out["always_flagged_by_label"] = summary.always_flagged_by_label;
  return out.dump(2) + "\n";
}

}  // namespace orts
