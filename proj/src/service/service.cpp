#include "dspace/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "dspace/engine.hpp"
#include "dspace/error.hpp"
#include "dspace/normalize.hpp"

namespace dspace {

struct Service::Snapshot {
  Json problem;
  std::uint64_t revision = 0;
  Json result;  // null until the first successful compute
  std::uint64_t result_revision = 0;
};

struct Service::Session {
  std::string id;
  std::mutex compute_mutex;  // held for a whole compute; try_lock gives 409
  std::mutex write_mutex;    // serializes commits
  std::shared_ptr<const Snapshot> snapshot;

  std::shared_ptr<const Snapshot> load() const { return std::atomic_load(&snapshot); }
  void store(std::shared_ptr<const Snapshot> s) { std::atomic_store(&snapshot, std::move(s)); }
};

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::infeasible:
      return 422;
    case ErrorCode::timeout:
      return 504;
    case ErrorCode::numeric:
      return 500;
    default:
      return 400;
  }
}

ServiceResponse respond(int status, const Json& doc) { return {status, dump_json(doc)}; }

ServiceResponse respond_error(int status, const std::string& code, const std::string& message) {
  return respond(status, error_body(code, message));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& text, const std::string& what) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw HttpError{400, "bad_request", what + ": '" + text + "' is not a finite number"};
  }
  return v;
}

int parse_int(const std::string& text, const std::string& what) {
  int v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw HttpError{400, "bad_request", what + ": '" + text + "' is not an integer"};
  }
  return v;
}

Json snapshot_json(const std::string& id, const Json& problem, std::uint64_t revision, const Json& result,
                   std::uint64_t result_revision) {
  return {{"schema_version", kSchemaVersion},
          {"id", id},
          {"revision", revision},
          {"problem", problem},
          {"result", result},
          {"result_revision", result_revision}};
}

Json parse_body(const std::string& body) {
  if (body.empty()) throw HttpError{400, "bad_request", "request body must be a JSON object"};
  Json doc = parse_json(body);
  if (!doc.is_object()) throw HttpError{400, "bad_request", "request body must be a JSON object"};
  return doc;
}

int require_parameter(const DsProblem& problem, const std::string& name) {
  const int idx = problem.parameter_index(name);
  if (idx < 0) throw HttpError{400, "bad_request", "unknown parameter '" + name + "'"};
  return idx;
}

void apply_patch(DsProblem& problem, const Json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (key == "schema_version") {
      if (!value.is_number_integer() || value.get<int>() != kSchemaVersion) {
        throw HttpError{400, "bad_request", "unsupported schema_version"};
      }
    } else if (key == "weights") {
      if (!value.is_object()) throw HttpError{400, "bad_request", "weights must be an object"};
      for (const auto& [name, w] : value.items()) {
        if (!w.is_number()) throw HttpError{400, "bad_request", "weight of '" + name + "' must be a number"};
        problem.parameters[static_cast<std::size_t>(require_parameter(problem, name))].weight = w.get<double>();
      }
    } else if (key == "setpoints") {
      if (!value.is_object()) throw HttpError{400, "bad_request", "setpoints must be an object"};
      for (const auto& [name, s] : value.items()) {
        auto& p = problem.parameters[static_cast<std::size_t>(require_parameter(problem, name))];
        if (p.categorical()) {
          if (!s.is_string()) throw HttpError{400, "bad_request", "setpoint of '" + name + "' must be a level label"};
          p.setpoint_level = s.get<std::string>();
        } else {
          if (!s.is_number()) throw HttpError{400, "bad_request", "setpoint of '" + name + "' must be a number"};
          p.setpoint = s.get<double>();
        }
      }
    } else if (key == "limits") {
      if (!value.is_object()) throw HttpError{400, "bad_request", "limits must be an object"};
      for (const auto& [name, lim] : value.items()) {
        auto it = std::find_if(problem.responses.begin(), problem.responses.end(),
                               [&](const ResponseDef& r) { return r.name == name; });
        if (it == problem.responses.end()) throw HttpError{400, "bad_request", "unknown response '" + name + "'"};
        if (!lim.is_object()) throw HttpError{400, "bad_request", "limits of '" + name + "' must be an object"};
        for (const auto& [side, v] : lim.items()) {
          if (side == "lower" || side == "accept_lower") {
            it->accept_lower = limit_from_json(v, -kInfinity);
          } else if (side == "upper" || side == "accept_upper") {
            it->accept_upper = limit_from_json(v, kInfinity);
          } else {
            throw HttpError{400, "bad_request", "unknown limit key '" + side + "'"};
          }
        }
      }
    } else if (key == "optimizer") {
      problem.config = optimizer_config_from_json(value, problem.config);
    } else {
      throw HttpError{400, "bad_request", "unknown patch key '" + key + "'"};
    }
  }
  problem.validate();
}

// Normalized coordinate of a categorical level on its relaxed dimension.
double level_coordinate(const NormalizedProblem& np, int param, const std::string& label, const DsProblem& problem) {
  const auto& def = problem.parameters[static_cast<std::size_t>(param)];
  const auto it = std::find(def.levels.begin(), def.levels.end(), label);
  if (it == def.levels.end()) throw HttpError{400, "bad_request", "unknown level '" + label + "' of '" + def.name + "'"};
  const auto& relax = np.transform.relaxations[static_cast<std::size_t>(param)];
  if (!relax) throw HttpError{400, "bad_request", "parameter '" + def.name + "' has no relaxed dimension"};
  return relax->coordinate(relax->effects[static_cast<std::size_t>(it - def.levels.begin())]);
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Json error_body(const std::string& code, const std::string& message) {
  return {{"schema_version", kSchemaVersion}, {"error", {{"code", code}, {"message", message}}}};
}

ServiceConfig ServiceConfig::from_env(ServiceConfig base) {
  if (const char* bind = std::getenv("DSPACE_BIND"); bind && *bind) {
    const std::string b = bind;
    const auto colon = b.rfind(':');
    if (colon == std::string::npos) {
      base.host = b;
    } else {
      base.host = b.substr(0, colon);
      const std::string port = b.substr(colon + 1);
      int v = 0;
      const auto r = std::from_chars(port.data(), port.data() + port.size(), v);
      if (r.ec != std::errc() || r.ptr != port.data() + port.size() || v < 0 || v > 65535) {
        throw Error(ErrorCode::specification, "DSPACE_BIND has an invalid port '" + port + "'");
      }
      base.port = v;
    }
  }
  if (const char* dir = std::getenv("DSPACE_STORAGE_DIR"); dir && *dir) base.storage_dir = dir;
  if (const char* token = std::getenv("DSPACE_API_TOKEN"); token) base.api_token = token;
  if (const char* t = std::getenv("DSPACE_COMPUTE_TIMEOUT"); t && *t) {
    const std::string s = t;
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !(v >= 0.0)) {
      throw Error(ErrorCode::specification, "DSPACE_COMPUTE_TIMEOUT must be a non-negative number of seconds");
    }
    base.compute_timeout_seconds = v;
  }
  return base;
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  std::filesystem::create_directories(config_.storage_dir);
  load_all();
}

Service::~Service() = default;

void Service::load_all() {
  for (const auto& entry : std::filesystem::directory_iterator(config_.storage_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    const Json doc = read_json_file(entry.path());
    try {
      auto snap = std::make_shared<Snapshot>();
      const std::string id = doc.at("id").get<std::string>();
      snap->problem = doc.at("problem");
      snap->revision = doc.at("revision").get<std::uint64_t>();
      snap->result = doc.at("result");
      snap->result_revision = doc.at("result_revision").get<std::uint64_t>();
      auto session = std::make_shared<Session>();
      session->id = id;
      session->store(std::move(snap));
      sessions_[id] = std::move(session);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, "session file " + entry.path().string() + ": " + e.what());
    }
  }
}

void Service::persist(const std::string& id, const Snapshot& s) const {
  const auto path = config_.storage_dir / (id + ".json");
  const auto tmp = config_.storage_dir / (id + ".json.tmp");
  write_text_file(tmp, dump_json(snapshot_json(id, s.problem, s.revision, s.result, s.result_revision)));
  std::filesystem::rename(tmp, path);
}

std::string Service::new_id() {
  static thread_local std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(sessions_mutex_);
  while (true) {
    std::ostringstream os;
    os << std::hex << (gen() ^ (++id_counter_ << 48));
    std::string id = os.str();
    id.insert(0, 16 - std::min<std::size_t>(16, id.size()), '0');
    if (!sessions_.count(id)) return id;
  }
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError{404, "not_found", "unknown session '" + id + "'"};
  return it->second;
}

ServiceResponse Service::handle(const ServiceRequest& request) {
  try {
    std::vector<std::string> parts;
    for (auto& p : split(request.path, '/')) {
      if (!p.empty()) parts.push_back(p);
    }
    if (parts.size() == 1 && parts[0] == "health") {
      if (request.method != "GET") throw HttpError{405, "method_not_allowed", "use GET"};
      return respond(200, {{"schema_version", kSchemaVersion}, {"status", "ok"}});
    }
    if (!config_.api_token.empty() && request.authorization != "Bearer " + config_.api_token) {
      throw HttpError{401, "unauthorized", "missing or invalid API token"};
    }
    if (parts.empty() || parts[0] != "sessions" || parts.size() > 3) {
      throw HttpError{404, "not_found", "no route for " + request.path};
    }
    auto expect = [&](const char* method) {
      if (request.method != method) throw HttpError{405, "method_not_allowed", std::string("use ") + method};
    };
    if (parts.size() == 1) {
      expect("POST");
      return create_session(request);
    }
    const std::string& id = parts[1];
    if (parts.size() == 2) {
      expect("GET");
      return get_session(id);
    }
    if (parts[2] == "problem") {
      expect("PATCH");
      return patch_problem(id, request);
    }
    if (parts[2] == "compute") {
      expect("POST");
      return compute(id, request);
    }
    if (parts[2] == "slice") {
      expect("GET");
      return slice(id, request);
    }
    throw HttpError{404, "not_found", "no route for " + request.path};
  } catch (const HttpError& e) {
    return respond_error(e.status, e.code, e.message);
  } catch (const Error& e) {
    return respond_error(http_status(e.code()), std::string(to_string(e.code())), e.what());
  } catch (const std::exception&) {
    return respond_error(500, "internal", "internal error");
  }
}

ServiceResponse Service::create_session(const ServiceRequest& request) {
  const Json doc = parse_body(request.body);
  DsProblem problem = problem_from_json(doc, config_.storage_dir);
  problem.validate();
  auto snap = std::make_shared<Snapshot>();
  snap->problem = problem_to_json(problem);
  snap->result = nullptr;
  const std::string id = new_id();
  persist(id, *snap);
  auto session = std::make_shared<Session>();
  session->id = id;
  session->store(snap);
  {
    std::lock_guard lock(sessions_mutex_);
    sessions_[id] = session;
  }
  return respond(201, snapshot_json(id, snap->problem, snap->revision, snap->result, snap->result_revision));
}

ServiceResponse Service::get_session(const std::string& id) {
  const auto s = find(id)->load();
  return respond(200, snapshot_json(id, s->problem, s->revision, s->result, s->result_revision));
}

ServiceResponse Service::patch_problem(const std::string& id, const ServiceRequest& request) {
  const auto session = find(id);
  std::unique_lock compute_lock(session->compute_mutex, std::try_to_lock);
  if (!compute_lock.owns_lock()) throw HttpError{409, "compute_in_progress", "a compute for this session is running"};
  const Json patch = parse_body(request.body);
  std::lock_guard write_lock(session->write_mutex);
  const auto current = session->load();
  DsProblem problem = problem_from_json(current->problem);
  apply_patch(problem, patch);
  auto next = std::make_shared<Snapshot>(*current);
  next->problem = problem_to_json(problem);
  next->revision = current->revision + 1;
  persist(id, *next);
  session->store(next);
  return respond(200, snapshot_json(id, next->problem, next->revision, next->result, next->result_revision));
}

ServiceResponse Service::compute(const std::string& id, const ServiceRequest& request) {
  const auto session = find(id);
  std::unique_lock compute_lock(session->compute_mutex, std::try_to_lock);
  if (!compute_lock.owns_lock()) throw HttpError{409, "compute_in_progress", "a compute for this session is running"};
  const auto current = session->load();
  DsProblem problem = problem_from_json(current->problem);
  for (const auto& [key, value] : request.query) {
    if (key == "pass2") {
      problem.config.pass2_method = pass2_method_from_string(value);
    } else if (key == "starts") {
      problem.config.starts = parse_int(value, "starts");
    } else {
      throw HttpError{400, "bad_request", "unknown compute parameter '" + key + "'"};
    }
  }
  problem.config.validate();
  if (config_.compute_timeout_seconds > 0.0) {
    const double t = problem.config.timeout_seconds;
    problem.config.timeout_seconds = t > 0.0 ? std::min(t, config_.compute_timeout_seconds) : config_.compute_timeout_seconds;
  }
  const DsResult res = compute_design_space(problem);
  const Json result = result_to_json(res);
  if (res.status == DsStatus::infeasible && !res.violated_response.empty()) {
    Json body = error_body("infeasible_at_setpoint", res.message);
    body["result"] = result;
    return respond(422, body);
  }
  std::lock_guard write_lock(session->write_mutex);
  auto next = std::make_shared<Snapshot>(*session->load());
  next->revision += 1;
  next->result = result;
  next->result_revision = next->revision;
  persist(id, *next);
  session->store(next);
  return respond(200, {{"schema_version", kSchemaVersion}, {"id", id}, {"revision", next->revision}, {"result", result}});
}

ServiceResponse Service::slice(const std::string& id, const ServiceRequest& request) {
  const auto snap = find(id)->load();
  const DsProblem problem = problem_from_json(snap->problem);
  const NormalizedProblem np = normalize_problem(problem);

  int resolution = kSliceDefaultResolution;
  std::vector<std::string> dims;
  std::vector<std::pair<std::string, std::string>> fixed;
  for (const auto& [key, value] : request.query) {
    if (key == "dims") {
      dims = split(value, ',');
    } else if (key == "resolution") {
      resolution = parse_int(value, "resolution");
    } else if (key == "fixed") {
      if (value.empty()) continue;
      for (const auto& item : split(value, ',')) {
        const auto sep = item.find_first_of(":=");
        if (sep == std::string::npos) throw HttpError{400, "bad_request", "fixed entries look like name:value"};
        fixed.emplace_back(item.substr(0, sep), item.substr(sep + 1));
      }
    } else {
      throw HttpError{400, "bad_request", "unknown slice parameter '" + key + "'"};
    }
  }
  if (dims.size() != 2 || dims[0] == dims[1]) throw HttpError{400, "bad_request", "dims must name two different parameters"};
  if (resolution < 2 || resolution > kSliceMaxResolution) {
    throw HttpError{400, "bad_request", "resolution must lie in 2.." + std::to_string(kSliceMaxResolution)};
  }
  int axis_param[2];
  int axis_dim[2];
  for (int a = 0; a < 2; ++a) {
    axis_param[a] = require_parameter(problem, dims[static_cast<std::size_t>(a)]);
    if (problem.parameters[static_cast<std::size_t>(axis_param[a])].categorical()) {
      throw HttpError{400, "bad_request", "slice dimension '" + dims[static_cast<std::size_t>(a)] + "' must be continuous"};
    }
    axis_dim[a] = np.transform.parameter_dim[static_cast<std::size_t>(axis_param[a])];
  }

  std::vector<double> z = np.setpoint;
  std::vector<std::string> labels(problem.parameters.size());
  for (std::size_t i = 0; i < problem.parameters.size(); ++i) labels[i] = problem.parameters[i].setpoint_level;
  std::vector<double> raw(problem.parameters.size());
  for (std::size_t i = 0; i < problem.parameters.size(); ++i) raw[i] = problem.parameters[i].setpoint;
  for (const auto& [name, value] : fixed) {
    const int idx = require_parameter(problem, name);
    if (idx == axis_param[0] || idx == axis_param[1]) {
      throw HttpError{400, "bad_request", "'" + name + "' is both a slice dimension and fixed"};
    }
    const auto& def = problem.parameters[static_cast<std::size_t>(idx)];
    const int dim = np.transform.parameter_dim[static_cast<std::size_t>(idx)];
    if (def.categorical()) {
      if (dim >= 0) z[static_cast<std::size_t>(dim)] = level_coordinate(np, idx, value, problem);
      else level_coordinate(np, idx, value, problem);
      labels[static_cast<std::size_t>(idx)] = value;
    } else {
      const double v = parse_number(value, "fixed value of '" + name + "'");
      if (v < def.lower || v > def.upper) {
        throw HttpError{400, "bad_request", "fixed value of '" + name + "' lies outside its screening bounds"};
      }
      z[static_cast<std::size_t>(dim)] = np.transform.to_normalized(dim, v);
      raw[static_cast<std::size_t>(idx)] = v;
    }
  }

  std::vector<double> axis[2];
  for (int a = 0; a < 2; ++a) {
    const auto& def = problem.parameters[static_cast<std::size_t>(axis_param[a])];
    for (int i = 0; i < resolution; ++i) {
      axis[a].push_back(def.lower + (def.upper - def.lower) * static_cast<double>(i) / (resolution - 1));
    }
  }
  // margin[j][i]: second dimension indexes rows.
  const std::size_t nr = np.responses.size();
  std::vector<Json> per_response(nr, Json::array());
  Json overall = Json::array();
  for (int j = 0; j < resolution; ++j) {
    z[static_cast<std::size_t>(axis_dim[1])] = np.transform.to_normalized(axis_dim[1], axis[1][static_cast<std::size_t>(j)]);
    std::vector<Json> rows(nr, Json::array());
    Json row = Json::array();
    for (int i = 0; i < resolution; ++i) {
      z[static_cast<std::size_t>(axis_dim[0])] =
          np.transform.to_normalized(axis_dim[0], axis[0][static_cast<std::size_t>(i)]);
      double worst = kInfinity;
      for (std::size_t r = 0; r < nr; ++r) {
        const auto& rs = np.responses[r];
        const auto v = rs.evaluate(z, TiMode::exact);
        const double m = std::min(v.lower() - rs.accept_lower(), rs.accept_upper() - v.upper());
        rows[r].push_back(finite_or_null(m));
        worst = std::min(worst, m);
      }
      row.push_back(finite_or_null(worst));
    }
    for (std::size_t r = 0; r < nr; ++r) per_response[r].push_back(std::move(rows[r]));
    overall.push_back(std::move(row));
  }

  Json fixed_out = Json::object();
  for (std::size_t i = 0; i < problem.parameters.size(); ++i) {
    if (static_cast<int>(i) == axis_param[0] || static_cast<int>(i) == axis_param[1]) continue;
    const auto& def = problem.parameters[i];
    fixed_out[def.name] = def.categorical() ? Json(labels[i]) : Json(raw[i]);
  }
  Json responses = Json::array();
  for (std::size_t r = 0; r < nr; ++r) {
    responses.push_back({{"name", np.responses[r].name()}, {"margin", std::move(per_response[r])}});
  }
  return respond(200, {{"schema_version", kSchemaVersion},
                       {"id", id},
                       {"revision", snap->revision},
                       {"dims", dims},
                       {"resolution", resolution},
                       {"x", axis[0]},
                       {"y", axis[1]},
                       {"fixed", fixed_out},
                       {"margin", overall},
                       {"responses", responses}});
}

}  // namespace dspace
