#include <atomic>
#include <exception>
#include <httplib.h>
#include <mutex>
#include <thread>

#include "orts/protocol.hpp"

namespace orts {

struct ModelClient::Impl {
  std::optional<Handshake> handshake;
  std::string id_prefix;
  std::atomic<std::uint64_t> next_id{0};

  std::string new_request_id() { return id_prefix + std::to_string(next_id++); }
};

namespace {

std::atomic<std::uint64_t> g_client_serial{0};

std::unique_ptr<httplib::Client> connect(const std::string& endpoint, const ClientOptions& opt) {
  auto cli = std::make_unique<httplib::Client>(endpoint);
  if (!cli->is_valid()) {
    throw TransportError("invalid endpoint '" + endpoint + "'");
  }
  cli->set_connection_timeout(opt.timeout);
  cli->set_read_timeout(opt.timeout);
  cli->set_write_timeout(opt.timeout);
  cli->set_keep_alive(true);
  return cli;
}

std::string check_response(const httplib::Result& res, const std::string& what) {
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write ||
        err == httplib::Error::ConnectionTimeout) {
      throw TransportError(what + ": " + httplib::to_string(err) + " (timeout or broken connection)");
    }
    throw TransportError(what + ": " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError(what + ": HTTP " + std::to_string(res->status) + " " + res->body);
  }
  return res->body;
}

/// Runs `job(i, client)` for every i in [0, n) on up to `inflight` workers,
/// each with its own connection. The first failure stops the batch and is
/// rethrown.
template <typename Job>
void run_pipelined(std::size_t n, const std::string& endpoint, const ClientOptions& opt, Job job) {
  if (n == 0) {
    return;
  }
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, opt.inflight)));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const auto work = [&] {
    try {
      auto cli = connect(endpoint, opt);
      while (!failed) {
        const std::size_t i = next++;
        if (i >= n) {
          break;
        }
        job(i, *cli);
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!first_error) {
        first_error = std::current_exception();
      }
      failed = true;
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
      threads.emplace_back(work);
    }
    for (auto& t : threads) {
      t.join();
    }
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }
}

}  // namespace

ModelClient::ModelClient(std::string endpoint, ClientOptions options)
    : endpoint_(std::move(endpoint)), options_(options), impl_(std::make_unique<Impl>()) {
  while (!endpoint_.empty() && endpoint_.back() == '/') {
    endpoint_.pop_back();
  }
  impl_->id_prefix = "orts-" + std::to_string(g_client_serial++) + "-";
}

ModelClient::~ModelClient() = default;

std::uint64_t ModelClient::requests_sent() const { return impl_->next_id.load(); }

const Handshake& ModelClient::handshake() {
  if (!impl_->handshake) {
    auto cli = connect(endpoint_, options_);
    const std::string body = check_response(cli->Get("/v1/handshake"), "handshake");
    impl_->handshake = decode_handshake(body);
  }
  return *impl_->handshake;
}

ClassificationOutcome ModelClient::classify(const RasterImage& img) {
  return classify_batch({&img}).front();
}

DetectionOutcome ModelClient::detect(const RasterImage& img) { return detect_batch({&img}).front(); }

std::vector<ClassificationOutcome> ModelClient::classify_batch(
    const std::vector<const RasterImage*>& images) {
  const Handshake& hs = handshake();
  if (!hs.supports(Task::classify)) {
    throw CapabilityError("endpoint " + endpoint_ + " does not offer classify");
  }
  std::vector<ClassificationOutcome> out(images.size());
  run_pipelined(images.size(), endpoint_, options_, [&](std::size_t i, httplib::Client& cli) {
    InferenceRequest req{Task::classify, encode_png(*images[i]), impl_->new_request_id()};
    const std::string body =
        check_response(cli.Post("/v1/classify", encode_request(req), "application/json"), "classify");
    out[i] = decode_classify_response(body, req.request_id, hs.num_classes);
  });
  return out;
}

std::vector<DetectionOutcome> ModelClient::detect_batch(const std::vector<const RasterImage*>& images) {
  const Handshake& hs = handshake();
  if (!hs.supports(Task::detect)) {
    throw CapabilityError("endpoint " + endpoint_ + " does not offer detect");
  }
  std::vector<DetectionOutcome> out(images.size());
  run_pipelined(images.size(), endpoint_, options_, [&](std::size_t i, httplib::Client& cli) {
    InferenceRequest req{Task::detect, encode_png(*images[i]), impl_->new_request_id()};
    const std::string body =
        check_response(cli.Post("/v1/detect", encode_request(req), "application/json"), "detect");
    out[i] = decode_detect_response(body, req.request_id, hs.num_classes, images[i]->dims());
  });
  return out;
}

}  // namespace orts
