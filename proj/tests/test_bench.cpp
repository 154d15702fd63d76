#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "dspace/bench.hpp"
#include "support.hpp"

using namespace dspace;
using namespace testing;

namespace {

const StudyRecord* find_record(const StudyReport& r, const std::string& method, const std::string& problem) {
  for (const auto& rec : r.records) {
    if (rec.method == method && rec.problem == problem) return &rec;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("random problems are reproducible from the seed") {
  RandomModelSpec spec;
  spec.p = 4;
  spec.seed = 123;
  const std::string a = dump_json(problem_to_json(generate_random_problem(spec).problem));
  const std::string b = dump_json(problem_to_json(generate_random_problem(spec).problem));
  CHECK(a == b);
  spec.seed = 124;
  CHECK(dump_json(problem_to_json(generate_random_problem(spec).problem)) != a);
}

TEST_CASE("zero densities leave intercept and main effects") {
  RandomModelSpec spec;
  spec.p = 2;
  spec.interaction_density = 0.0;
  spec.quadratic_density = 0.0;
  spec.seed = 5;
  const GeneratedProblem g = generate_random_problem(spec);
  CHECK(g.problem.responses[0].model.terms.size() == 3);
}

TEST_CASE("calibrated feasible fraction is near its target") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RandomModelSpec spec;
    spec.p = 2 + static_cast<int>(seed % 3);
    spec.seed = seed;
    const GeneratedProblem g = generate_random_problem(spec);
    const double f = feasible_fraction(g.problem, 10000, seed + 99);
    CHECK(std::abs(f - spec.target_feasible) <= 0.15);
  }
}

TEST_CASE("constant model has no approximation error") {
  const auto factors = continuous(3);
  Eigen::VectorXd beta(1);
  beta << 2.0;
  const RegressionModel m = model_on_design(factors, {TermSpec::intercept()}, beta, 0.04, three_level_design(3));
  Rng rng(1);
  const auto err = ti_accuracy_errors(m, TiSpec{}, 1.0, 200, rng);
  CHECK(err.size() == 200);
  for (double e : err) CHECK(std::abs(e) < 1e-12);
}

TEST_CASE("histogram keeps every sample") {
  Histogram h;
  h.counts.assign(40, 0);
  Rng rng(2);
  for (int i = 0; i < 5000; ++i) h.add(0.06 * rng.normal());
  CHECK(h.total() == 5000);
  CHECK(h.underflow > 0);
  CHECK(h.overflow > 0);
}

TEST_CASE("aggregates use the sample standard deviation") {
  std::vector<StudyRecord> recs(3);
  const double secs[3] = {1.0, 2.0, 4.0};
  for (int i = 0; i < 3; ++i) {
    recs[static_cast<std::size_t>(i)].method = "m";
    recs[static_cast<std::size_t>(i)].p = 3;
    recs[static_cast<std::size_t>(i)].seconds = secs[i];
  }
  const auto agg = aggregate_records(recs, "seconds");
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].count == 3);
  CHECK(agg[0].mean == doctest::Approx(7.0 / 3.0));
  CHECK(agg[0].sd == doctest::Approx(std::sqrt(7.0 / 3.0)));
}

TEST_CASE("interval accuracy study and report round trip") {
  TiAccuracyOptions opt;
  opt.iterations = 100;
  opt.points = 50;
  opt.p_min = 2;
  opt.p_max = 4;
  opt.seed = 7;
  const StudyReport r = ti_accuracy_study(opt);
  CHECK(r.records.size() == 100);
  REQUIRE(r.histogram.has_value());
  CHECK(r.histogram->total() == 100 * 50);
  CHECK(r.mean_abs_error >= 0.0);
  CHECK(r.mean_abs_error < 0.05);

  const std::string a = dump_json(report_to_json(r));
  const StudyReport back = report_from_json(parse_json(a));
  CHECK(dump_json(report_to_json(back)) == a);
  CHECK(report_to_csv(back) == report_to_csv(r));

  opt.iterations = 10;
  CHECK(error_code_of([&] { ti_accuracy_study(opt); }) == ErrorCode::specification);
}

TEST_CASE("accuracy study on the six-factor problem orders the methods") {
  std::vector<NamedProblem> problems{{"six", six_factor_problem()}};
  AccuracyOptions opt;
  opt.grid_resolution = 5;
  opt.weights = {{"x6", 3.0}};
  const StudyReport r = accuracy_study(problems, opt);
  const StudyRecord* grid = find_record(r, "grid", "six");
  const StudyRecord* pass1 = find_record(r, "pass1", "six");
  const StudyRecord* two = find_record(r, "two_pass", "six");
  const StudyRecord* weighted = find_record(r, "weighted", "six");
  REQUIRE(grid);
  REQUIRE(pass1);
  REQUIRE(two);
  REQUIRE(weighted);
  CHECK(two->feasible);
  CHECK(two->volume >= pass1->volume - 1e-6);
  CHECK(two->volume >= grid->volume);
  CHECK(weighted->weighted_volume == doctest::Approx(3.0 * weighted->volume).epsilon(1e-9));
  const std::string a = dump_json(report_to_json(r));
  CHECK(dump_json(report_to_json(report_from_json(parse_json(a)))) == a);
}

TEST_CASE("timing study projects the grid above its measured range") {
  TimingOptions opt;
  opt.p_min = 2;
  opt.p_max = 4;
  opt.iterations = 1;
  opt.grid_max_p = 3;
  opt.corners = false;
  opt.seed = 3;
  const StudyReport r = timing_study(opt);
  bool saw_projected = false;
  for (const auto& rec : r.records) {
    if (rec.method == "grid") {
      CHECK(rec.projected == (rec.p > 3));
      saw_projected = saw_projected || rec.projected;
    } else {
      CHECK_FALSE(rec.projected);
    }
    CHECK(rec.seconds > 0.0);
  }
  CHECK(saw_projected);
  const Json plot = report_plot_data(r);
  CHECK(plot.is_object());
}

TEST_CASE("grid cost grows by about the resolution per dimension") {
  TimingOptions opt;
  opt.p_min = 3;
  opt.p_max = 5;
  opt.iterations = 1;
  opt.grid_max_p = 5;
  opt.seed = 11;
  opt.corners = false;
  const StudyReport r = timing_study(opt);
  std::map<int, double> t;
  for (const auto& rec : r.records) {
    if (rec.method == "grid") t[rec.p] = rec.seconds;
  }
  REQUIRE(t.size() == 3);
  const double base = std::sqrt(t[5] / t[3]);
  CHECK(base >= 8.0 * 0.8);
  CHECK(base <= 8.0 * 1.2);
}
