#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dspace/bench.hpp"
#include "dspace/cli.hpp"
#include "support.hpp"

using namespace dspace;
using namespace testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("dspace_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << text;
  return p;
}

fs::path write_problem(const std::string& name, const DsProblem& prob) {
  return write(name, dump_json(problem_to_json(prob)));
}

std::string training_csv(bool duplicate_column, bool bad_level) {
  std::ostringstream csv;
  csv << "temp,time,grade" << (duplicate_column ? ",temp_copy" : "") << ",y\n";
  Rng rng(17);
  const char* grades[2] = {"a", "b"};
  for (int i = 0; i < 20; ++i) {
    const double t = rng.uniform(-1, 1), u = rng.uniform(-1, 1);
    csv << t << "," << u << "," << (bad_level && i == 7 ? "zzz" : grades[i % 2]);
    if (duplicate_column) csv << "," << t;
    csv << "," << 3 + t - 2 * u + 0.1 * rng.normal() << "\n";
  }
  return csv.str();
}

}  // namespace

TEST_CASE("fit prints the coefficient table and writes the model") {
  const fs::path data = write("train.csv", training_csv(false, false));
  const fs::path spec = write("spec.json",
                              R"({"factors":[{"name":"temp"},{"name":"time"},{"name":"grade","levels":["a","b"]}],)"
                              R"("terms":["1","temp","time","grade"]})");
  const fs::path out = scratch() / "model.json";
  const Run r = run({"fit", "--data", data.string(), "--spec", spec.string(), "--out", out.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("temp") != std::string::npos);
  CHECK(r.out.find("sigma2") != std::string::npos);
  const RegressionModel m = model_from_json(read_json_file(out));
  CHECK(m.terms.size() == 4);
  CHECK(m.n == 20);
}

TEST_CASE("fit with an unknown level exits with a usage error") {
  const fs::path data = write("bad_level.csv", training_csv(false, true));
  const fs::path spec = write("spec_levels.json",
                              R"({"factors":[{"name":"temp"},{"name":"time"},{"name":"grade","levels":["a","b"]}],)"
                              R"("terms":["1","temp","time","grade"]})");
  const Run r = run({"fit", "--data", data.string(), "--spec", spec.string(), "--out", (scratch() / "m2.json").string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("zzz") != std::string::npos);
}

TEST_CASE("fit with a duplicated column reports rank deficiency") {
  const fs::path data = write("dup.csv", training_csv(true, false));
  const fs::path spec = write("spec_dup.json", R"({"factors":[{"name":"temp"},{"name":"time"},{"name":"grade","levels":["a","b"]},{"name":"temp_copy"}],)"
                                                 R"("terms":["1","temp","time","temp_copy"]})");
  const Run r = run({"fit", "--data", data.string(), "--spec", spec.string(), "--out", (scratch() / "m3.json").string()});
  CHECK(r.code == kExitRankDeficient);
  CHECK(r.err.find("temp_copy") != std::string::npos);
}

TEST_CASE("compute exit codes") {
  const fs::path ok = write_problem("parabola.json", parabola_problem());
  const Run a = run({"compute", ok.string()});
  CHECK(a.code == kExitOk);
  const Json res = parse_json(a.out);
  CHECK(res.at("status") == "feasible");

  DsProblem bad = parabola_problem();
  bad.responses[0].accept_upper = -3.0;
  const Run b = run({"compute", write_problem("infeasible.json", bad).string()});
  CHECK(b.code == kExitInfeasible);
  CHECK(parse_json(b.out).at("violated_response") == "y");

  const Run c = run({"compute", write("garbage.json", "{ \"parameters\": 3").string()});
  CHECK(c.code == kExitUsage);
  const Run d = run({"compute", (scratch() / "missing.json").string()});
  CHECK(d.code == kExitUsage);
}

TEST_CASE("usage errors") {
  CHECK(run({}).code == kExitUsage);
  const Run r = run({"bench", "nonsense"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("nonsense") != std::string::npos);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"compute", "x.json", "--pass2", "newton"}).code == kExitUsage);
}

TEST_CASE("corner constraints can be dropped in ten dimensions") {
  RandomModelSpec spec;
  spec.p = 10;
  spec.seed = 2;
  const fs::path p = write_problem("p10.json", generate_random_problem(spec).problem);
  const Run r = run({"compute", p.string(), "--no-corners", "--pass2", "none"});
  CHECK((r.code == kExitOk || r.code == kExitInfeasible));
  CHECK(parse_json(r.out).at("constraint_count") == 52);
}

TEST_CASE("weights scale the reported weighted volume") {
  const fs::path p = write_problem("six.json", six_factor_problem());
  const Run plain = run({"compute", p.string(), "--pass2", "none"});
  const Run weighted = run({"compute", p.string(), "--pass2", "none", "--weights", "x6=3"});
  REQUIRE(plain.code == 0);
  REQUIRE(weighted.code == 0);
  const Json a = parse_json(plain.out), b = parse_json(weighted.out);
  CHECK(b.at("weighted_volume").get<double>() == doctest::Approx(3.0 * b.at("volume").get<double>()).epsilon(1e-9));
  CHECK(b.at("weighted_volume").get<double>() >= 3.0 * a.at("volume").get<double>() * (1 - 1e-6));
  CHECK(run({"compute", p.string(), "--weights", "nope=2"}).code == kExitUsage);
}

TEST_CASE("grid and canned subcommands") {
  const Run c = run({"canned", "parabola"});
  CHECK(c.code == 0);
  const fs::path p = write("canned.json", c.out);
  const Run g = run({"grid", p.string(), "--resolution", "8"});
  CHECK((g.code == kExitOk || g.code == kExitInfeasible));
  CHECK(parse_json(g.out).at("volume").get<double>() > 0.0);
}

TEST_CASE("interval accuracy bench writes its reports") {
  const fs::path dir = scratch() / "bench";
  const Run r = run({"bench", "ti-accuracy", "--iters", "100", "--points", "20", "--pmin", "2", "--pmax", "3",
                     "--out-dir", dir.string()});
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "ti_accuracy.json"));
  CHECK(fs::exists(dir / "ti_accuracy.csv"));
  CHECK(fs::exists(dir / "ti_accuracy_plot.json"));
}
