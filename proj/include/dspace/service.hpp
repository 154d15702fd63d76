#pragma once

// Session service behind the HTTP API. Requests are handled by a
// transport-independent core so tests can drive it without sockets;
// HttpServer adapts it to cpp-httplib.

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "dspace/json_io.hpp"

namespace dspace {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path storage_dir = "sessions";
  std::string api_token;  // empty: no authentication
  double compute_timeout_seconds = 120.0;

  // DSPACE_BIND ("host:port" or "host"), DSPACE_STORAGE_DIR,
  // DSPACE_API_TOKEN, DSPACE_COMPUTE_TIMEOUT. Unset variables keep `base`.
  static ServiceConfig from_env(ServiceConfig base);
  static ServiceConfig from_env() { return from_env(ServiceConfig{}); }
};

struct ServiceRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::string authorization;  // raw Authorization header
};

struct ServiceResponse {
  int status = 200;
  std::string body;  // JSON document
};

// Slice grid size bounds.
inline constexpr int kSliceDefaultResolution = 41;
inline constexpr int kSliceMaxResolution = 101;

class Service {
 public:
  // Loads every session file found in the storage directory.
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ServiceResponse handle(const ServiceRequest& request);
  const ServiceConfig& config() const { return config_; }

 private:
  struct Session;
  struct Snapshot;

  ServiceResponse create_session(const ServiceRequest& request);
  ServiceResponse get_session(const std::string& id);
  ServiceResponse patch_problem(const std::string& id, const ServiceRequest& request);
  ServiceResponse compute(const std::string& id, const ServiceRequest& request);
  ServiceResponse slice(const std::string& id, const ServiceRequest& request);

  std::shared_ptr<Session> find(const std::string& id);
  std::string new_id();
  void persist(const std::string& id, const Snapshot& snapshot) const;
  void load_all();

  ServiceConfig config_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::atomic<std::uint64_t> id_counter_{0};
};

// Error document: {"schema_version": 1, "error": {"code": ..., "message": ...}}.
Json error_body(const std::string& code, const std::string& message);

// cpp-httplib front end. Port 0 in the config binds an ephemeral port.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Returns the bound port; throws a capacity error when binding fails.
  int bind();
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dspace
