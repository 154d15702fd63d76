// Project headers (Eigen) come first: <resolv.h>, pulled in by httplib,
// defines a `res` macro.
#include "dspace/error.hpp"
#include "dspace/service.hpp"

#include <httplib.h>

namespace dspace {

struct HttpServer::Impl {
  explicit Impl(Service& s) : service(s) {}
  Service& service;
  httplib::Server server;
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& server = impl_->server;
  const auto timeout = static_cast<time_t>(service.config().compute_timeout_seconds) + 30;
  server.set_read_timeout(timeout, 0);
  server.set_write_timeout(timeout, 0);

  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    ServiceRequest r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query[k] = v;
    r.body = req.body;
    r.authorization = req.get_header_value("Authorization");
    const ServiceResponse out = service.handle(r);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  const char* any = R"(/.*)";
  server.Get(any, handler);
  server.Post(any, handler);
  server.Patch(any, handler);
  server.Put(any, handler);
  server.Delete(any, handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  const auto& cfg = impl_->service.config();
  int port = cfg.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(cfg.host);
  } else if (!impl_->server.bind_to_port(cfg.host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(ErrorCode::capacity, "cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace dspace
