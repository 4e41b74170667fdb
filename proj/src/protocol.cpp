#include "orts/protocol.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <json.hpp>

namespace orts {

using nlohmann::json;

namespace {

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("invalid JSON: ") + e.what());
  }
}

const json& require(const json& obj, const char* field) {
  if (!obj.is_object()) {
    throw ProtocolError("expected a JSON object");
  }
  const auto it = obj.find(field);
  if (it == obj.end()) {
    throw ProtocolError("missing field", field);
  }
  return *it;
}

std::string require_string(const json& obj, const char* field) {
  const json& v = require(obj, field);
  if (!v.is_string()) {
    throw ProtocolError("expected a string", field);
  }
  return v.get<std::string>();
}

double require_number(const json& v, const std::string& field) {
  if (!v.is_number()) {
    throw ProtocolError("expected a number", field);
  }
  const double d = v.get<double>();
  if (!std::isfinite(d)) {
    throw ProtocolError("non-finite number", field);
  }
  return d;
}

void check_request_id(const json& doc, const std::string& expected) {
  const std::string got = require_string(doc, "request_id");
  if (got != expected) {
    throw ProtocolError("mismatched request_id '" + got + "', expected '" + expected + "'",
                        "request_id");
  }
}

}  // namespace

std::string_view to_string(Task task) { return task == Task::classify ? "classify" : "detect"; }

Task parse_task(std::string_view s) {
  if (s == "classify") {
    return Task::classify;
  }
  if (s == "detect") {
    return Task::detect;
  }
  throw ProtocolError("unknown task '" + std::string(s) + "'", "task");
}

bool Handshake::supports(Task t) const {
  return std::find(tasks.begin(), tasks.end(), t) != tasks.end();
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  if (bytes.empty()) {
    return out;
  }
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw ProtocolError("base64 length not a multiple of 4", "image_b64");
  }
  if (text.empty()) {
    return {};
  }
  std::vector<std::uint8_t> out(text.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) {
    throw ProtocolError("invalid base64", "image_b64");
  }
  std::size_t pad = 0;
  if (text.back() == '=') {
    pad = text[text.size() - 2] == '=' ? 2 : 1;
  }
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string encode_request(const InferenceRequest& req) {
  json doc;
  doc["task"] = to_string(req.task);
  doc["image_b64"] = base64_encode(req.png);
  doc["request_id"] = req.request_id;
  return doc.dump();
}

InferenceRequest decode_request(const std::string& body) {
  const json doc = parse_body(body);
  InferenceRequest req;
  req.task = parse_task(require_string(doc, "task"));
  req.png = base64_decode(require_string(doc, "image_b64"));
  req.request_id = require_string(doc, "request_id");
  return req;
}

std::string encode_handshake(const Handshake& hs) {
  json doc;
  doc["tasks"] = json::array();
  for (const Task t : hs.tasks) {
    doc["tasks"].push_back(to_string(t));
  }
  doc["num_classes"] = hs.num_classes;
  doc["labels"] = hs.labels;
  if (!hs.model_name.empty()) {
    doc["model_name"] = hs.model_name;
  }
  return doc.dump();
}

Handshake decode_handshake(const std::string& body) {
  const json doc = parse_body(body);
  Handshake hs;
  const json& tasks = require(doc, "tasks");
  if (!tasks.is_array()) {
    throw ProtocolError("expected an array", "tasks");
  }
  for (const auto& t : tasks) {
    if (!t.is_string()) {
      throw ProtocolError("expected task names", "tasks");
    }
    hs.tasks.push_back(parse_task(t.get<std::string>()));
  }
  const json& n = require(doc, "num_classes");
  if (!n.is_number_integer() || n.get<std::int64_t>() <= 0) {
    throw ProtocolError("expected a positive integer", "num_classes");
  }
  hs.num_classes = n.get<std::size_t>();
  const json& labels = require(doc, "labels");
  if (!labels.is_array()) {
    throw ProtocolError("expected an array", "labels");
  }
  for (const auto& l : labels) {
    if (!l.is_string()) {
      throw ProtocolError("expected label names", "labels");
    }
    hs.labels.push_back(l.get<std::string>());
  }
  if (hs.labels.size() != hs.num_classes) {
    throw ProtocolError("label count " + std::to_string(hs.labels.size()) +
                            " differs from num_classes " + std::to_string(hs.num_classes),
                        "labels");
  }
  if (const auto it = doc.find("model_name"); it != doc.end() && it->is_string()) {
    hs.model_name = it->get<std::string>();
  }
  return hs;
}

std::string encode_classify_response(const std::string& request_id,
                                     const ClassificationOutcome& outcome) {
  json doc;
  doc["request_id"] = request_id;
  doc["probs"] = outcome.probs;
  return doc.dump();
}

ClassificationOutcome decode_classify_response(const std::string& body,
                                               const std::string& expected_request_id,
                                               std::size_t num_classes) {
  const json doc = parse_body(body);
  check_request_id(doc, expected_request_id);
  const json& probs = require(doc, "probs");
  if (!probs.is_array()) {
    throw ProtocolError("expected an array", "probs");
  }
  if (probs.size() != num_classes) {
    throw ProtocolError("length " + std::to_string(probs.size()) + " != C=" +
                            std::to_string(num_classes) + " (full probability vector required)",
                        "probs");
  }
  ClassificationOutcome out;
  out.probs.reserve(probs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = require_number(probs[i], "probs");
    if (p < 0.0 || p > 1.0) {
      throw ProtocolError("entry " + std::to_string(i) + " outside [0,1]", "probs");
    }
    sum += p;
    out.probs.push_back(p);
  }
  if (sum < 0.99 || sum > 1.01) {
    throw ProtocolError("sum " + std::to_string(sum) + " outside [0.99, 1.01]", "probs");
  }
  return out;
}

std::string encode_detect_response(const std::string& request_id, const DetectionOutcome& outcome) {
  json doc;
  doc["request_id"] = request_id;
  doc["records"] = json::array();
  for (const auto& r : outcome.records) {
    json rec;
    rec["label"] = r.label;
    rec["bbox"] = {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h};
    rec["confidence"] = r.confidence;
    if (r.mask) {
      rec["mask_rle"] = encode_rle_row_major(*r.mask);
    }
    doc["records"].push_back(std::move(rec));
  }
  return doc.dump();
}

DetectionOutcome decode_detect_response(const std::string& body,
                                        const std::string& expected_request_id,
                                        std::size_t num_classes, Dims image_dims) {
  const json doc = parse_body(body);
  check_request_id(doc, expected_request_id);
  const json& records = require(doc, "records");
  if (!records.is_array()) {
    throw ProtocolError("expected an array", "records");
  }
  DetectionOutcome out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& rec = records[i];
    const std::string where = "records[" + std::to_string(i) + "].";
    DetectionRecord r;
    const json& label = require(rec, "label");
    if (!label.is_number_integer() || label.get<std::int64_t>() < 0 ||
        label.get<std::uint64_t>() >= num_classes) {
      throw ProtocolError("label outside [0, C)", where + "label");
    }
    r.label = label.get<CategoryId>();
    const json& bbox = require(rec, "bbox");
    if (!bbox.is_array() || bbox.size() != 4) {
      throw ProtocolError("expected [x, y, w, h]", where + "bbox");
    }
    std::array<int, 4> b{};
    for (std::size_t k = 0; k < 4; ++k) {
      b[k] = static_cast<int>(std::lround(require_number(bbox[k], where + "bbox")));
    }
    r.bbox = {b[0], b[1], b[2], b[3]};
    if (r.bbox.w < 0 || r.bbox.h < 0) {
      throw ProtocolError("negative extent", where + "bbox");
    }
    r.confidence = require_number(require(rec, "confidence"), where + "confidence");
    if (r.confidence < 0.0 || r.confidence > 1.0) {
      throw ProtocolError("confidence outside [0,1]", where + "confidence");
    }
    if (const auto it = rec.find("mask_rle"); it != rec.end() && !it->is_null()) {
      try {
        r.mask = decode_rle_row_major(it->get<std::vector<std::uint32_t>>(), image_dims);
      } catch (const std::exception& e) {
        throw ProtocolError(e.what(), where + "mask_rle");
      }
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

std::string encode_error(const std::string& message) {
  json doc;
  doc["error"] = message;
  return doc.dump();
}

LabelMapping LabelMapping::resolve(const LabelMap& dataset, const Handshake& hs,
                                   const std::map<std::string, std::string>& remap) {
  LabelMapping m;
  m.to_dataset_.assign(hs.num_classes, std::nullopt);
  if (remap.empty()) {
    if (dataset.names() != hs.labels) {
      throw Error("model labels differ from dataset labels; a label remap table is required");
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      m.to_model_.push_back(i);
      m.to_dataset_[i] = static_cast<CategoryId>(i);
    }
    return m;
  }
  m.identity_ = false;
  std::map<std::string, std::size_t> model_index;
  for (std::size_t i = 0; i < hs.labels.size(); ++i) {
    model_index.emplace(hs.labels[i], i);
  }
  for (std::size_t id = 0; id < dataset.size(); ++id) {
    const std::string& name = dataset.names()[id];
    const auto r = remap.find(name);
    if (r == remap.end()) {
      throw Error("label remap table has no entry for dataset label '" + name + "'");
    }
    const auto mi = model_index.find(r->second);
    if (mi == model_index.end()) {
      throw Error("label remap target '" + r->second + "' is not a model label");
    }
    if (m.to_dataset_[mi->second]) {
      throw Error("label remap maps two dataset labels onto model label '" + r->second + "'");
    }
    m.to_dataset_[mi->second] = static_cast<CategoryId>(id);
    m.to_model_.push_back(mi->second);
  }
  m.identity_ = false;
  return m;
}

std::size_t LabelMapping::model_index(CategoryId dataset_label) const {
  return to_model_.at(static_cast<std::size_t>(dataset_label));
}

std::optional<CategoryId> LabelMapping::dataset_label(std::size_t model_index) const {
  if (model_index >= to_dataset_.size()) {
    return std::nullopt;
  }
  return to_dataset_[model_index];
}

}  // namespace orts
