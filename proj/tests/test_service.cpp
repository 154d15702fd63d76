#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>
#include <sstream>
#include <thread>

#include "dspace/bench.hpp"
#include "dspace/cli.hpp"
#include "dspace/service.hpp"
#include "support.hpp"

// After every project header: <resolv.h> defines a `res` macro.
#include <httplib.h>

using namespace dspace;
using namespace testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() /
                       ("dspace_service_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(++counter));
  fs::remove_all(dir);
  return dir;
}

ServiceConfig config_for(const fs::path& dir, double timeout = 120.0, std::string token = {}) {
  ServiceConfig c;
  c.storage_dir = dir;
  c.compute_timeout_seconds = timeout;
  c.api_token = std::move(token);
  c.port = 0;
  return c;
}

ServiceResponse call(Service& s, const std::string& method, const std::string& path, const std::string& body = {},
                     std::map<std::string, std::string> query = {}, std::string auth = {}) {
  ServiceRequest r;
  r.method = method;
  r.path = path;
  r.body = body;
  r.query = std::move(query);
  r.authorization = std::move(auth);
  return s.handle(r);
}

std::string create(Service& s, const DsProblem& prob) {
  const ServiceResponse r = call(s, "POST", "/sessions", dump_json(problem_to_json(prob)));
  REQUIRE(r.status == 201);
  return parse_json(r.body).at("id").get<std::string>();
}

std::string error_code(const ServiceResponse& r) { return parse_json(r.body).at("error").at("code").get<std::string>(); }

// Parabola with the upper limit raised to 0.25 and the setpoint at the centre.
DsProblem relaxed_parabola() {
  DsProblem p = parabola_problem();
  p.responses[0].accept_upper = 0.25;
  p.parameters[1].setpoint = 0.0;
  return p;
}

DsProblem slow_problem() {
  RandomModelSpec spec;
  spec.p = 8;
  spec.seed = 3;
  DsProblem p = generate_random_problem(spec).problem;
  p.config.starts = 8;
  return p;
}

}  // namespace

TEST_CASE("health needs no token while sessions do") {
  Service s(config_for(fresh_dir("auth"), 120, "sekret"));
  CHECK(call(s, "GET", "/health").status == 200);
  const ServiceResponse denied = call(s, "POST", "/sessions", dump_json(problem_to_json(parabola_problem())));
  CHECK(denied.status == 401);
  CHECK(error_code(denied) == "unauthorized");
  const ServiceResponse ok =
      call(s, "POST", "/sessions", dump_json(problem_to_json(parabola_problem())), {}, "Bearer sekret");
  CHECK(ok.status == 201);
}

TEST_CASE("routing errors") {
  Service s(config_for(fresh_dir("routes")));
  CHECK(call(s, "GET", "/nowhere").status == 404);
  CHECK(call(s, "GET", "/sessions/0000000000000000").status == 404);
  CHECK(call(s, "DELETE", "/sessions").status == 405);
  const ServiceResponse bad = call(s, "POST", "/sessions", "{ nope");
  CHECK(bad.status == 400);
  const auto body = parse_json(bad.body);
  CHECK(body.at("schema_version") == 1);
  CHECK(body.at("error").contains("message"));
}

TEST_CASE("session lifecycle: patch then compute bumps the revision twice") {
  const fs::path dir = fresh_dir("life");
  Service s(config_for(dir));
  const std::string id = create(s, parabola_problem());
  CHECK(id.size() == 16);

  Json get = parse_json(call(s, "GET", "/sessions/" + id).body);
  CHECK(get.at("revision") == 0);
  CHECK(get.at("result").is_null());

  const Json patch = {{"limits", {{"y", {{"upper", 0.1}}}}}};
  const ServiceResponse p = call(s, "PATCH", "/sessions/" + id + "/problem", patch.dump());
  REQUIRE(p.status == 200);
  const ServiceResponse c = call(s, "POST", "/sessions/" + id + "/compute");
  REQUIRE(c.status == 200);
  const Json cj = parse_json(c.body);
  CHECK(cj.at("revision") == 2);
  CHECK(cj.at("result").at("status") == "feasible");

  get = parse_json(call(s, "GET", "/sessions/" + id).body);
  CHECK(get.at("revision") == 2);
  CHECK(get.at("result_revision") == 2);
  CHECK(get.at("problem").at("responses").at(0).at("accept_upper") == 0.1);

  CHECK(call(s, "PATCH", "/sessions/" + id + "/problem", Json{{"colour", 1}}.dump()).status == 400);
  CHECK(call(s, "POST", "/sessions/" + id + "/compute", "", {{"bogus", "1"}}).status == 400);
}

TEST_CASE("sessions survive a restart byte for byte") {
  const fs::path dir = fresh_dir("reload");
  std::string id, before;
  {
    Service s(config_for(dir));
    id = create(s, parabola_problem());
    REQUIRE(call(s, "POST", "/sessions/" + id + "/compute").status == 200);
    before = call(s, "GET", "/sessions/" + id).body;
  }
  Service again(config_for(dir));
  CHECK(call(again, "GET", "/sessions/" + id).body == before);
}

TEST_CASE("setpoint outside the limits returns 422 and leaves the session untouched") {
  Service s(config_for(fresh_dir("infeasible")));
  DsProblem prob = parabola_problem();
  prob.responses[0].accept_upper = -5.0;
  const std::string id = create(s, prob);
  const std::string before = call(s, "GET", "/sessions/" + id).body;
  const ServiceResponse r = call(s, "POST", "/sessions/" + id + "/compute");
  CHECK(r.status == 422);
  const Json body = parse_json(r.body);
  CHECK(body.at("error").at("code") == "infeasible_at_setpoint");
  CHECK(body.at("result").at("violated_response") == "y");
  CHECK(call(s, "GET", "/sessions/" + id).body == before);
}

TEST_CASE("slice margins on the relaxed parabola") {
  Service s(config_for(fresh_dir("slice")));
  const std::string id = create(s, relaxed_parabola());
  const ServiceResponse r =
      call(s, "GET", "/sessions/" + id + "/slice", "", {{"dims", "x1,x2"}, {"resolution", "41"}, {"fixed", ""}});
  REQUIRE(r.status == 200);
  const Json j = parse_json(r.body);
  CHECK(j.at("x").size() == 41);
  CHECK(j.at("margin").size() == 41);

  // Along x2 = 0 the model has no noise, so the margin is 0.25 - x1^2.
  const auto& xs = j.at("x");
  const auto& ys = j.at("y");
  std::size_t row0 = 0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    if (std::abs(ys[k].get<double>()) < 1e-12) row0 = k;
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x1 = xs[i].get<double>();
    CHECK(j.at("margin")[row0][i].get<double>() == doctest::Approx(0.25 - x1 * x1).epsilon(1e-9));
  }
  // Zeros at x1 = +-0.5 (grid points 10 and 30 of 41).
  CHECK(std::abs(j.at("margin")[row0][10].get<double>()) < 1e-12);
  CHECK(std::abs(j.at("margin")[row0][30].get<double>()) < 1e-12);

  CHECK(call(s, "GET", "/sessions/" + id + "/slice", "", {{"dims", "x1,x1"}}).status == 400);
  CHECK(call(s, "GET", "/sessions/" + id + "/slice", "", {{"dims", "x1,x2"}, {"resolution", "500"}}).status == 400);
}

TEST_CASE("fixed values are validated") {
  Service s(config_for(fresh_dir("fixed")));
  const std::string id = create(s, relaxed_parabola());
  const std::string path = "/sessions/" + id + "/slice";
  CHECK(call(s, "GET", path, "", {{"dims", "x1,x2"}, {"fixed", "x1:0.5"}}).status == 400);
  CHECK(call(s, "GET", path, "", {{"dims", "x1,x2"}, {"fixed", "nope:0.5"}}).status == 400);
  CHECK(call(s, "GET", path, "", {{"dims", "x1,x3"}}).status == 400);
}

TEST_CASE("concurrent compute gets 409 and a slow compute times out with 504") {
  Service s(config_for(fresh_dir("slow"), 1.0));
  const std::string id = create(s, slow_problem());
  auto first = std::async(std::launch::async, [&] { return call(s, "POST", "/sessions/" + id + "/compute"); });
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  const ServiceResponse second = call(s, "POST", "/sessions/" + id + "/compute");
  CHECK(second.status == 409);
  const ServiceResponse patch =
      call(s, "PATCH", "/sessions/" + id + "/problem", Json{{"optimizer", {{"starts", 1}}}}.dump());
  CHECK(patch.status == 409);
  const ServiceResponse r = first.get();
  CHECK(r.status == 504);
  CHECK(error_code(r) == "timeout");
  CHECK(parse_json(call(s, "GET", "/sessions/" + id).body).at("revision") == 0);
}

TEST_CASE("HTTP server returns the same result bytes as the command line") {
  const fs::path dir = fresh_dir("http");
  Service s(config_for(dir));
  HttpServer server(s);
  const int port = server.bind();
  std::thread runner([&] { server.listen(); });

  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(120, 0);
  const auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);

  const fs::path problem_file = dir / "problem.json";
  write_text_file(problem_file, dump_json(problem_to_json(parabola_problem())));
  const auto created = client.Post("/sessions", dump_json(problem_to_json(parabola_problem())), "application/json");
  REQUIRE(created);
  REQUIRE(created->status == 201);
  const std::string id = parse_json(created->body).at("id").get<std::string>();
  const auto computed = client.Post("/sessions/" + id + "/compute", "", "application/json");
  REQUIRE(computed);
  REQUIRE(computed->status == 200);

  std::ostringstream out, err;
  const int code = run_cli({"compute", problem_file.string()}, out, err);
  CHECK(code == 0);
  CHECK(dump_json(parse_json(computed->body).at("result")) == out.str());

  server.stop();
  runner.join();
}

TEST_CASE("environment overrides") {
  ::setenv("DSPACE_BIND", "0.0.0.0:9123", 1);
  ::setenv("DSPACE_COMPUTE_TIMEOUT", "7.5", 1);
  const ServiceConfig c = ServiceConfig::from_env();
  CHECK(c.host == "0.0.0.0");
  CHECK(c.port == 9123);
  CHECK(c.compute_timeout_seconds == 7.5);
  ::setenv("DSPACE_BIND", "host:notaport", 1);
  CHECK(error_code_of([] { ServiceConfig::from_env(); }) == ErrorCode::specification);
  ::unsetenv("DSPACE_BIND");
  ::unsetenv("DSPACE_COMPUTE_TIMEOUT");
}
