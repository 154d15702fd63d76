#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dspace/bench.hpp"
#include "dspace/engine.hpp"
#include "dspace/grid.hpp"
#include "support.hpp"

using namespace dspace;
using namespace testing;

namespace {

RegressionModel exact_model(int p, const std::vector<TermSpec>& terms, const std::vector<double>& coef) {
  Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  RegressionModel m = model_on_design(continuous(p), terms, beta, 0.0, three_level_design(p));
  m.response = "y";
  return m;
}

FeasibilityTensor make_tensor(int dims, int res) {
  FeasibilityTensor t;
  t.dims = dims;
  t.resolution = res;
  std::size_t n = 1;
  for (int i = 0; i < dims; ++i) n *= static_cast<std::size_t>(res);
  t.feasible.assign(n, 1);
  return t;
}

// Independent brute force over all index boxes in two or three dimensions.
std::uint64_t brute_force_best(const FeasibilityTensor& t, const SetpointCell& cell) {
  const int d = t.dims, r = t.resolution;
  std::vector<int> lo(static_cast<std::size_t>(d)), hi(static_cast<std::size_t>(d));
  std::uint64_t best = 0;
  bool any = false;
  std::function<void(int)> rec = [&](int j) {
    if (j == d) {
      std::vector<int> idx(static_cast<std::size_t>(d));
      std::function<bool(int)> all = [&](int k) {
        if (k == d) return t.at(idx);
        for (int v = lo[static_cast<std::size_t>(k)]; v <= hi[static_cast<std::size_t>(k)]; ++v) {
          idx[static_cast<std::size_t>(k)] = v;
          if (!all(k + 1)) return false;
        }
        return true;
      };
      if (!all(0)) return;
      std::uint64_t vol = 1;
      for (int k = 0; k < d; ++k) vol *= static_cast<std::uint64_t>(hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)]);
      if (!any || vol > best) best = vol;
      any = true;
      return;
    }
    const auto js = static_cast<std::size_t>(j);
    for (int a = 0; a <= cell.must_lo[js]; ++a) {
      for (int b = cell.must_hi[js]; b < r; ++b) {
        lo[js] = a;
        hi[js] = b;
        rec(j + 1);
      }
    }
  };
  rec(0);
  return any ? best : UINT64_MAX;
}

}  // namespace

TEST_CASE("grid coordinates and flattening") {
  const FeasibilityTensor t = make_tensor(3, 5);
  CHECK(t.coordinate(0) == -1.0);
  CHECK(t.coordinate(2) == 0.0);
  CHECK(t.coordinate(4) == 1.0);
  const std::vector<int> idx{1, 2, 3};
  CHECK(t.flat(idx) == 1 * 25 + 2 * 5 + 3);
}

TEST_CASE("setpoint cells on and between grid lines") {
  const std::vector<double> s{0.0, -1.0, 0.1};
  const SetpointCell c = setpoint_cell(s, 5);
  CHECK(c.must_lo == std::vector<int>{2, 0, 2});
  CHECK(c.must_hi == std::vector<int>{2, 0, 3});
  const SetpointCell even = setpoint_cell(std::vector<double>{0.0}, 8);
  CHECK(even.must_lo == std::vector<int>{3});
  CHECK(even.must_hi == std::vector<int>{4});
}

TEST_CASE("all-feasible tensor gives the full cube") {
  const FeasibilityTensor t = make_tensor(2, 3);
  const GridBox b = largest_feasible_box(t, setpoint_cell(std::vector<double>{0.0, 0.0}, 3));
  REQUIRE(b.found);
  CHECK(b.volume == doctest::Approx(4.0));
  CHECK(b.lo == std::vector<int>{0, 0});
  CHECK(b.hi == std::vector<int>{2, 2});
}

TEST_CASE("identity model at resolution 3 is feasible everywhere") {
  const RegressionModel m = exact_model(2, {TermSpec::intercept(), TermSpec::linear(0)}, {0.0, 1.0});
  const NormalizedProblem n = normalize_problem(single_response(m, -1, 1));
  const FeasibilityTensor t = evaluate_grid(n, GridSpec{3, false});
  CHECK(std::all_of(t.feasible.begin(), t.feasible.end(), [](auto v) { return v == 1; }));
}

TEST_CASE("one infeasible corner matches brute force over all boxes") {
  FeasibilityTensor t = make_tensor(2, 3);
  const std::vector<int> corner{2, 2};
  t.feasible[t.flat(corner)] = 0;
  const SetpointCell cell = setpoint_cell(std::vector<double>{0.0, 0.0}, 3);
  const GridBox b = largest_feasible_box(t, cell);
  REQUIRE(b.found);
  CHECK(b.index_volume == brute_force_best(t, cell));
  CHECK(b.index_volume == 2);
  // Ties broken by the smallest lower then upper index vectors.
  CHECK(b.lo == std::vector<int>{0, 0});
  CHECK(b.hi == std::vector<int>{1, 2});
}

TEST_CASE("random tensors agree with brute force") {
  Rng rng(19);
  for (int rep = 0; rep < 60; ++rep) {
    const int dims = rep % 2 == 0 ? 2 : 3;
    const int res = rng.uniform_int(3, dims == 2 ? 7 : 5);
    FeasibilityTensor t = make_tensor(dims, res);
    const double density = rng.uniform(0.0, 0.35);
    for (auto& v : t.feasible) v = rng.uniform() < density ? 0 : 1;
    std::vector<double> s(static_cast<std::size_t>(dims));
    for (double& v : s) v = rng.uniform(-1, 1);
    const SetpointCell cell = setpoint_cell(s, res);
    const GridBox b = largest_feasible_box(t, cell);
    const std::uint64_t expected = brute_force_best(t, cell);
    if (expected == UINT64_MAX) {
      CHECK_FALSE(b.found);
    } else {
      REQUIRE(b.found);
      CHECK(b.index_volume == expected);
    }
  }
}

TEST_CASE("permuting dimensions permutes the box") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    FeasibilityTensor t = make_tensor(2, 6);
    for (auto& v : t.feasible) v = rng.uniform() < 0.2 ? 0 : 1;
    FeasibilityTensor tt = make_tensor(2, 6);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        const std::vector<int> a{i, j}, b{j, i};
        tt.feasible[tt.flat(b)] = t.feasible[t.flat(a)];
      }
    }
    const std::vector<double> s{0.1, -0.3}, st{-0.3, 0.1};
    const GridBox b1 = largest_feasible_box(t, setpoint_cell(s, 6));
    const GridBox b2 = largest_feasible_box(tt, setpoint_cell(st, 6));
    CHECK(b1.found == b2.found);
    CHECK(b1.index_volume == b2.index_volume);
  }
}

TEST_CASE("dimension guard") {
  const GeneratedProblem g = [] {
    RandomModelSpec spec;
    spec.p = 7;
    spec.seed = 1;
    return generate_random_problem(spec);
  }();
  CHECK(error_code_of([&] { compute_grid_design_space(g.problem, GridSpec{3, false}); }) == ErrorCode::capacity);
  CHECK(error_code_of([] { GridSpec{1, false}.validate(); }) == ErrorCode::specification);
}

TEST_CASE("grid box on the parabola stays strictly below the optimum") {
  const GridOutcome g = compute_grid_design_space(parabola_problem(), GridSpec{8, false});
  REQUIRE(g.box.found);
  CHECK(g.result.volume < 4.0 / (3.0 * std::sqrt(3.0)));
  CHECK(g.result.volume > 0.0);
}

TEST_CASE("optimizer volume dominates the grid on the six-factor problem") {
  const DsProblem prob = six_factor_problem();
  const GridOutcome g = compute_grid_design_space(prob, GridSpec{5, false});
  const DsResult r = compute_design_space(prob);
  REQUIRE(r.feasible());
  CHECK(r.volume >= g.result.volume);
}
