#include <httplib.h>
#include <thread>

#include "orts/protocol.hpp"

namespace orts {

struct ProtocolServer::Impl {
  ModelBackend backend;
  httplib::Server server;
  std::thread thread;
};

namespace {

template <typename Handler>
void handle(const httplib::Request& http_req, httplib::Response& res, Task expected, Handler fn) {
  try {
    const InferenceRequest req = decode_request(http_req.body);
    if (req.task != expected) {
      throw ProtocolError("task does not match endpoint", "task");
    }
    const RasterImage img = decode_png(req.png);
    res.set_content(fn(req.request_id, img), "application/json");
  } catch (const ProtocolError& e) {
    res.status = 400;
    res.set_content(encode_error(e.what()), "application/json");
  } catch (const std::exception& e) {
    res.status = 500;
    res.set_content(encode_error(e.what()), "application/json");
  }
}

}  // namespace

ProtocolServer::ProtocolServer(ModelBackend backend) : impl_(std::make_unique<Impl>()) {
  impl_->backend = std::move(backend);
  auto& b = impl_->backend;
  b.handshake.tasks.clear();
  if (b.classify) {
    b.handshake.tasks.push_back(Task::classify);
  }
  if (b.detect) {
    b.handshake.tasks.push_back(Task::detect);
  }
  auto& srv = impl_->server;
  srv.Get("/v1/handshake", [&b](const httplib::Request&, httplib::Response& res) {
    res.set_content(encode_handshake(b.handshake), "application/json");
  });
  srv.Post("/v1/classify", [&b](const httplib::Request& req, httplib::Response& res) {
    if (!b.classify) {
      res.status = 404;
      res.set_content(encode_error("classify not offered"), "application/json");
      return;
    }
    handle(req, res, Task::classify, [&b](const std::string& id, const RasterImage& img) {
      return encode_classify_response(id, b.classify(img));
    });
  });
  srv.Post("/v1/detect", [&b](const httplib::Request& req, httplib::Response& res) {
    if (!b.detect) {
      res.status = 404;
      res.set_content(encode_error("detect not offered"), "application/json");
      return;
    }
    handle(req, res, Task::detect, [&b](const std::string& id, const RasterImage& img) {
      return encode_detect_response(id, b.detect(img));
    });
  });
}

ProtocolServer::~ProtocolServer() { stop(); }

int ProtocolServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
  } else {
    port_ = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) {
    throw TransportError("cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void ProtocolServer::run(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!impl_->server.listen(host, port)) {
    throw TransportError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void ProtocolServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) {
    impl_->thread.join();
  }
}

std::string ProtocolServer::url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace orts
