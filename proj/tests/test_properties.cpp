// Seeded property loops. Each case draws many random instances and checks
// an invariant that holds for all of them.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dspace/bench.hpp"
#include "dspace/chi2.hpp"
#include "dspace/constraints.hpp"
#include "dspace/engine.hpp"
#include "dspace/grid.hpp"
#include "support.hpp"

using namespace dspace;
using namespace testing;

namespace {

constexpr int kCases = 200;

Eigen::MatrixXd random_design(Rng& rng, int n, int k) {
  Eigen::MatrixXd x(n, k);
  for (int r = 0; r < n; ++r) {
    x(r, 0) = 1.0;
    for (int c = 1; c < k; ++c) x(r, c) = rng.uniform(-2, 2);
  }
  return x;
}

}  // namespace

TEST_CASE("fit is invariant to row order") {
  Rng rng(101);
  for (int t = 0; t < kCases; ++t) {
    const int k = rng.uniform_int(1, 5);
    const int n = k + rng.uniform_int(2, 20);
    const Eigen::MatrixXd x = random_design(rng, n, k);
    Eigen::VectorXd y(n);
    for (int r = 0; r < n; ++r) y(r) = rng.normal();
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    Eigen::MatrixXd xp(n, k);
    Eigen::VectorXd yp(n);
    for (int r = 0; r < n; ++r) {
      xp.row(r) = x.row(perm[static_cast<std::size_t>(r)]);
      yp(r) = y(perm[static_cast<std::size_t>(r)]);
    }
    const RegressionModel a = fit_ols(x, y), b = fit_ols(xp, yp);
    CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-9 * (1 + a.beta.cwiseAbs().maxCoeff()));
    CHECK(a.sigma2 == doctest::Approx(b.sigma2).epsilon(1e-9));
  }
}

TEST_CASE("scaling the response scales coefficients and variance") {
  Rng rng(102);
  for (int t = 0; t < kCases; ++t) {
    const int k = rng.uniform_int(1, 4);
    const int n = k + rng.uniform_int(2, 15);
    const Eigen::MatrixXd x = random_design(rng, n, k);
    Eigen::VectorXd y(n);
    for (int r = 0; r < n; ++r) y(r) = rng.normal();
    const double c = rng.uniform(0.1, 10.0);
    const RegressionModel a = fit_ols(x, y), b = fit_ols(x, c * y);
    CHECK((b.beta - c * a.beta).cwiseAbs().maxCoeff() < 1e-9 * c * (1 + a.beta.cwiseAbs().maxCoeff()));
    CHECK(b.sigma2 == doctest::Approx(c * c * a.sigma2).epsilon(1e-9));
  }
}

TEST_CASE("exact half-width grows with leverage and with coverage") {
  Rng rng(103);
  for (int t = 0; t < kCases; ++t) {
    const int df = rng.uniform_int(1, 60);
    const double s2 = rng.uniform(0.01, 4.0);
    const double alpha = rng.uniform(0.01, 0.2), psi = rng.uniform(0.8, 0.995);
    const ExactTi ti(df, s2, TiSpec{alpha, psi});
    const ExactTi wider(df, s2, TiSpec{alpha, std::min(0.999, psi + 0.004)});
    const double h1 = rng.uniform(0.001, 2.0), h2 = h1 * rng.uniform(1.01, 3.0);
    CHECK(ti.half_width(h1) < ti.half_width(h2));
    CHECK(ti.half_width(h1) < wider.half_width(h1));
    CHECK(ti.half_width_slope(h1) > 0.0);
  }
}

TEST_CASE("chi-square cdf is monotone in x and decreasing in ncp") {
  Rng rng(104);
  for (int t = 0; t < kCases; ++t) {
    const double df = rng.uniform_int(1, 20);
    const double ncp = rng.uniform(0.0, 10.0);
    const double x1 = rng.uniform(0.01, 40.0), x2 = x1 + rng.uniform(0.01, 5.0);
    CHECK(noncentral_chi2_cdf(x1, df, ncp) <= noncentral_chi2_cdf(x2, df, ncp));
    CHECK(noncentral_chi2_cdf(x1, df, ncp + 0.5) <= noncentral_chi2_cdf(x1, df, ncp) + 1e-15);
  }
}

TEST_CASE("approximate bounds are ordered") {
  Rng rng(105);
  for (int t = 0; t < kCases; ++t) {
    TiApproximation a;
    a.c0 = rng.uniform(-1, 1);
    a.c1 = rng.uniform(-1, 1);
    a.c2 = rng.uniform(-1, 1);
    const TiBounds b = approx_ti(a, rng.uniform(-5, 5));
    CHECK(b.lower <= b.upper);
  }
}

TEST_CASE("objective scales with the weights") {
  Rng rng(106);
  for (int t = 0; t < kCases; ++t) {
    const int d = rng.uniform_int(1, 8);
    std::vector<double> x(static_cast<std::size_t>(2 * d)), w(static_cast<std::size_t>(d));
    for (double& v : x) v = rng.uniform(-1, 1);
    for (double& v : w) v = rng.uniform(0.1, 3);
    const double c = rng.uniform(0.5, 2.0);
    std::vector<double> cw = w;
    cw[0] *= c;
    CHECK(objective(x, cw) == doctest::Approx(c * objective(x, w)).epsilon(1e-12));
  }
}

TEST_CASE("largest grid box encloses only feasible points and the setpoint cell") {
  Rng rng(107);
  for (int t = 0; t < kCases; ++t) {
    FeasibilityTensor f;
    f.dims = rng.uniform_int(1, 3);
    f.resolution = rng.uniform_int(2, 6);
    std::size_t n = 1;
    for (int i = 0; i < f.dims; ++i) n *= static_cast<std::size_t>(f.resolution);
    f.feasible.resize(n);
    for (auto& v : f.feasible) v = rng.uniform() < 0.25 ? 0 : 1;
    std::vector<double> s(static_cast<std::size_t>(f.dims));
    for (double& v : s) v = rng.uniform(-1, 1);
    const SetpointCell cell = setpoint_cell(s, f.resolution);
    const GridBox b = largest_feasible_box(f, cell);
    if (!b.found) continue;
    std::vector<int> idx(static_cast<std::size_t>(f.dims));
    for (std::size_t flat = 0; flat < n; ++flat) {
      std::size_t rem = flat;
      bool inside = true;
      for (int j = f.dims - 1; j >= 0; --j) {
        const auto js = static_cast<std::size_t>(j);
        idx[js] = static_cast<int>(rem % static_cast<std::size_t>(f.resolution));
        rem /= static_cast<std::size_t>(f.resolution);
        inside = inside && idx[js] >= b.lo[js] && idx[js] <= b.hi[js];
      }
      if (inside) CHECK(f.feasible[flat] == 1);
    }
    for (std::size_t j = 0; j < static_cast<std::size_t>(f.dims); ++j) {
      CHECK(b.lo[j] <= cell.must_lo[j]);
      CHECK(b.hi[j] >= cell.must_hi[j]);
    }
  }
}

TEST_CASE("feasible design spaces hold under independent sampling") {
  // Draw points inside the reported box in raw units and evaluate the raw
  // model's exact interval, bypassing every normalized structure.
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    RandomModelSpec spec;
    spec.p = 2 + static_cast<int>(seed % 3);
    spec.seed = 7000 + seed;
    const DsProblem prob = generate_random_problem(spec).problem;
    const DsResult r = compute_design_space(prob);
    if (!r.feasible()) continue;
    ++checked;
    const ResponseDef& resp = prob.responses[0];
    Rng rng(seed);
    double worst = kInfinity;
    for (int i = 0; i < 2000; ++i) {
      std::vector<double> pt;
      for (const auto& pr : r.parameters) pt.push_back(rng.uniform(pr.lower, pr.upper));
      const TiBounds b = exact_ti(resp.model, expand_point(pt, resp.model.terms, resp.model.factors), resp.ti);
      worst = std::min({worst, b.lower - resp.accept_lower, resp.accept_upper - b.upper});
    }
    CHECK(worst >= -1e-3);
  }
  CHECK(checked >= 6);
}
