#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "orts/annotations.hpp"
#include "orts/raster.hpp"

namespace orts {

enum class Task { classify, detect };
std::string_view to_string(Task task);
Task parse_task(std::string_view s);

struct ClassificationOutcome {
  /// probs[i] is the probability of category id i.
  std::vector<double> probs;
  friend bool operator==(const ClassificationOutcome&, const ClassificationOutcome&) = default;
};

struct DetectionRecord {
  CategoryId label = 0;
  BoundingBox bbox;
  double confidence = 0.0;
  std::optional<RegionMask> mask;
  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct DetectionOutcome {
  std::vector<DetectionRecord> records;
  friend bool operator==(const DetectionOutcome&, const DetectionOutcome&) = default;
};

struct Handshake {
  std::vector<Task> tasks;
  std::size_t num_classes = 0;
  std::vector<std::string> labels;
  std::string model_name;

  bool supports(Task t) const;
};

/// Malformed or contract-violating message. `field` names the offending
/// JSON field when one can be singled out.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what, std::string field = {})
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Connection failure, timeout, or non-2xx status.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Requested task not offered by the endpoint.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// ---- codec -----------------------------------------------------------------

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct InferenceRequest {
  Task task = Task::classify;
  std::vector<std::uint8_t> png;
  std::string request_id;
};

std::string encode_request(const InferenceRequest& req);
InferenceRequest decode_request(const std::string& body);

std::string encode_handshake(const Handshake& hs);
Handshake decode_handshake(const std::string& body);

std::string encode_classify_response(const std::string& request_id,
                                     const ClassificationOutcome& outcome);
/// Validates length == num_classes, entries in [0,1], sum in [0.99, 1.01],
/// and the echoed request id.
ClassificationOutcome decode_classify_response(const std::string& body,
                                               const std::string& expected_request_id,
                                               std::size_t num_classes);

std::string encode_detect_response(const std::string& request_id, const DetectionOutcome& outcome);
/// `image_dims` sizes decoded masks. Validates confidence in [0,1] and labels < num_classes.
DetectionOutcome decode_detect_response(const std::string& body,
                                        const std::string& expected_request_id,
                                        std::size_t num_classes, Dims image_dims);

std::string encode_error(const std::string& message);

// ---- label mapping ---------------------------------------------------------

/// Dataset category id -> model output index, and back.
class LabelMapping {
 public:
  /// Identity when the model's label list equals the dataset's. Otherwise
  /// `remap` (dataset name -> model name) must cover every dataset label.
  static LabelMapping resolve(const LabelMap& dataset, const Handshake& hs,
                              const std::map<std::string, std::string>& remap = {});

  std::size_t model_index(CategoryId dataset_label) const;
  std::optional<CategoryId> dataset_label(std::size_t model_index) const;
  bool identity() const { return identity_; }

 private:
  bool identity_ = true;
  std::vector<std::size_t> to_model_;
  std::vector<std::optional<CategoryId>> to_dataset_;
};

// ---- client ----------------------------------------------------------------

struct ClientOptions {
  std::chrono::milliseconds timeout{30'000};
  int inflight = 4;
};

/// HTTP/1.1 JSON client for one model endpoint. Batch calls keep up to
/// `inflight` requests outstanding, one connection per worker.
class ModelClient {
 public:
  explicit ModelClient(std::string endpoint, ClientOptions options = {});
  ~ModelClient();
  ModelClient(const ModelClient&) = delete;
  ModelClient& operator=(const ModelClient&) = delete;

  /// Fetched once, then cached.
  const Handshake& handshake();

  ClassificationOutcome classify(const RasterImage& img);
  DetectionOutcome detect(const RasterImage& img);

  /// Results are positionally aligned with `images`.
  std::vector<ClassificationOutcome> classify_batch(const std::vector<const RasterImage*>& images);
  std::vector<DetectionOutcome> detect_batch(const std::vector<const RasterImage*>& images);

  const std::string& endpoint() const { return endpoint_; }
  std::uint64_t requests_sent() const;

 private:
  struct Impl;
  std::string endpoint_;
  ClientOptions options_;
  std::unique_ptr<Impl> impl_;
};

// ---- server ----------------------------------------------------------------

/// Callbacks backing a protocol endpoint. Unset callbacks mean the task is
/// not offered.
struct ModelBackend {
  Handshake handshake;
  std::function<ClassificationOutcome(const RasterImage&)> classify;
  std::function<DetectionOutcome(const RasterImage&)> detect;
};

class ProtocolServer {
 public:
  explicit ProtocolServer(ModelBackend backend);
  ~ProtocolServer();
  ProtocolServer(const ProtocolServer&) = delete;
  ProtocolServer& operator=(const ProtocolServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  int port() const { return port_; }
  std::string url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::string host_;
};

}  // namespace orts
