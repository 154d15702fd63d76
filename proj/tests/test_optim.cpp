#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dspace/bench.hpp"
#include "dspace/constraints.hpp"
#include "dspace/engine.hpp"
#include "dspace/json_io.hpp"
#include "dspace/normalize.hpp"
#include "dspace/solvers.hpp"
#include "support.hpp"

using namespace dspace;
using namespace testing;

namespace {

// Noise-free model with the given terms and coefficients on [-1, 1]^p.
RegressionModel exact_model(int p, const std::vector<TermSpec>& terms, const std::vector<double>& coef,
                            const std::string& response = "y") {
  Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  RegressionModel m = model_on_design(continuous(p), terms, beta, 0.0, three_level_design(p));
  m.response = response;
  return m;
}

GeneratedProblem random_problem(int p, std::uint64_t seed) {
  RandomModelSpec spec;
  spec.p = p;
  spec.seed = seed;
  return generate_random_problem(spec);
}

double parabola_optimum() { return 4.0 / (3.0 * std::sqrt(3.0)); }

}  // namespace

TEST_CASE("setpoint at the middle of the screening range maps to zero") {
  const RegressionModel m = exact_model(1, {TermSpec::intercept(), TermSpec::linear(0)}, {0.0, 1.0});
  DsProblem prob = single_response(m, -5, 5);
  prob.parameters[0].lower = 0.0;
  prob.parameters[0].upper = 10.0;
  prob.parameters[0].setpoint = 5.0;
  prob.responses[0].model = m;
  const NormalizedProblem n = normalize_problem(prob);
  CHECK(n.setpoint[0] == 0.0);
  CHECK(n.transform.to_normalized(0, 0.0) == -1.0);
  CHECK(n.transform.to_normalized(0, 10.0) == 1.0);
  CHECK(n.transform.to_raw(0, 0.5) == 7.5);
}

TEST_CASE("raw model re-expressed in normalized units") {
  // y = 2 + 3x on [0, 10] becomes 17 + 15 z.
  const auto factors = continuous(1);
  Eigen::VectorXd beta(2);
  beta << 2.0, 3.0;
  const RegressionModel raw = make_prefitted(factors, {TermSpec::intercept(), TermSpec::linear(0)}, beta, 0.5, 10,
                                             Eigen::MatrixXd::Identity(2, 2));
  const std::vector<double> centre{5.0}, half{5.0};
  const RegressionModel z = normalize_model(raw, centre, half);
  CHECK(z.beta(0) == doctest::Approx(17.0).epsilon(1e-14));
  CHECK(z.beta(1) == doctest::Approx(15.0).epsilon(1e-14));
  CHECK(z.residual_df() == raw.residual_df());
  for (int i = 0; i < 100; ++i) {
    const double zz = -1.0 + 2.0 * i / 99.0;
    const std::vector<double> zp{zz}, xp{5.0 + 5.0 * zz};
    const Prediction a = predict(z, expand_point(zp, z.terms, z.factors));
    const Prediction b = predict(raw, expand_point(xp, raw.terms, raw.factors));
    CHECK(std::abs(a.mean - b.mean) < 1e-10);
    CHECK(std::abs(a.se - b.se) < 1e-10);
  }
}

TEST_CASE("normalization preserves predictions of random quadratic models") {
  Rng rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    const auto factors = continuous(3);
    const std::vector<TermSpec> terms{TermSpec::intercept(),      TermSpec::linear(0),        TermSpec::linear(1),
                                      TermSpec::linear(2),        TermSpec::interaction(0, 2), TermSpec::quadratic(1)};
    Eigen::VectorXd beta(6);
    for (int i = 0; i < 6; ++i) beta(i) = rng.uniform(-3, 3);
    Eigen::MatrixXd design = three_level_design(3);
    std::vector<double> centre(3), half(3);
    for (int j = 0; j < 3; ++j) {
      centre[static_cast<std::size_t>(j)] = rng.uniform(-10, 10);
      half[static_cast<std::size_t>(j)] = rng.uniform(0.5, 4);
      design.col(j) = (design.col(j) * half[static_cast<std::size_t>(j)]).array() + centre[static_cast<std::size_t>(j)];
    }
    const RegressionModel raw = model_on_design(factors, terms, beta, 0.2, design);
    const RegressionModel norm = normalize_model(raw, centre, half);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> zp(3), xp(3);
      for (std::size_t j = 0; j < 3; ++j) {
        zp[j] = rng.uniform(-1, 1);
        xp[j] = centre[j] + half[j] * zp[j];
      }
      const Prediction a = predict(norm, expand_point(zp, norm.terms, norm.factors));
      const Prediction b = predict(raw, expand_point(xp, raw.terms, raw.factors));
      CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-9));
      CHECK(a.se == doctest::Approx(b.se).epsilon(1e-7));
    }
  }
}

TEST_CASE("candidate round trip between raw and normalized units") {
  Rng rng(2);
  const RegressionModel m = exact_model(3, {TermSpec::intercept(), TermSpec::linear(0)}, {0.0, 1.0});
  DsProblem prob = single_response(m, -5, 5);
  prob.parameters[1].lower = 100.0;
  prob.parameters[1].upper = 250.0;
  prob.parameters[1].setpoint = 120.0;
  const NormalizedProblem n = normalize_problem(prob);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> x(6);
    for (double& v : x) v = rng.uniform(-1, 1);
    const auto raw = denormalize_candidate(n.transform, x);
    const auto back = normalize_candidate(n.transform, raw);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) < 1e-12);
  }
}

TEST_CASE("categorical relaxation spans the level effects") {
  const CategoricalCoding coding{"c", {"a", "b", "c"}, {-0.4, 0.1, 0.3}};
  const CategoricalRelaxation r = relax_categorical(coding);
  CHECK(r.range == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(r.midpoint == doctest::Approx(-0.05).epsilon(1e-14));
  CHECK(r.coordinate(-0.4) == doctest::Approx(-1.0));
  CHECK(r.coordinate(0.3) == doctest::Approx(1.0));
  CHECK(r.effect(r.coordinate(0.1)) == doctest::Approx(0.1));
  CHECK(r.order == std::vector<int>{0, 1, 2});
  CHECK_FALSE(r.dropped);

  CHECK(map_levels(r, -0.5, 0.2) == std::vector<int>{0, 1});
  CHECK(map_levels(r, 0.1, 0.3) == std::vector<int>{1, 2});
  CHECK(map_levels(r, 0.15, 0.25).empty());
  CHECK(map_levels(r, -1.0, 1.0) == std::vector<int>{0, 1, 2});

  const CategoricalRelaxation two = relax_categorical({"d", {"u", "v"}, {0.2, -0.2}});
  CHECK(two.midpoint == doctest::Approx(0.0));
  CHECK(two.range == doctest::Approx(0.4));
  CHECK(two.order == std::vector<int>{1, 0});

  CHECK(relax_categorical({"e", {"u", "v"}, {0.0, 0.0}}).dropped);
}

TEST_CASE("relaxed codes interpolate the adjacent levels") {
  const CategoricalRelaxation r = relax_categorical({"c", {"a", "b", "c"}, {-0.4, 0.1, 0.3}});
  std::vector<double> code(2), slope(2);
  relaxed_code(r, r.coordinate(0.1), code, slope);
  CHECK(code[0] == doctest::Approx(0.0));
  CHECK(code[1] == doctest::Approx(1.0));
  relaxed_code(r, -1.0, code, slope);
  CHECK(code[0] == doctest::Approx(1.0));
  CHECK(code[1] == doctest::Approx(0.0));
  // The coding prediction equals the effect at every coordinate.
  for (double c = -1.0; c <= 1.0; c += 0.05) {
    relaxed_code(r, c, code, slope);
    const double predicted = code[0] * -0.4 + code[1] * 0.1;
    CHECK(predicted == doctest::Approx(r.effect(c)).epsilon(1e-12));
  }
}

TEST_CASE("objective values and gradient") {
  const std::vector<double> ones{1.0, 1.0};
  const std::vector<double> full{-1.0, -1.0, 1.0, 1.0};
  CHECK(objective(full, ones) == 4.0);
  const std::vector<double> w{2.0, 1.0};
  CHECK(objective(full, w) == 8.0);
  const std::vector<double> flat{0.0, 0.0, 0.0, 1.0};
  CHECK(objective(flat, ones) == 0.0);

  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x(6), wt(3), g(6);
    for (double& v : x) v = rng.uniform(-1, 1);
    for (double& v : wt) v = rng.uniform(0.5, 3);
    objective_gradient(x, wt, g);
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += 1e-6;
      xm[i] -= 1e-6;
      const double fd = (objective(xp, wt) - objective(xm, wt)) / 2e-6;
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("constraint counts") {
  CHECK(constraint_count(3, 1, true) == 33);
  CHECK(constraint_count(1, 1, true) == 11);
  CHECK(constraint_count(10, 1, false) == 52);
  for (int p = 1; p <= 10; ++p) {
    CHECK(constraint_count(p, 1, true) == (2L << p) + 5 * p + 2);
    CHECK(constraint_count(p, 2, false) == 5 * p + 4);
  }
  // The assembled set agrees with the formula.
  for (int p = 1; p <= 6; ++p) {
    std::vector<TermSpec> terms{TermSpec::intercept()};
    std::vector<double> coef{0.0};
    for (int i = 0; i < p; ++i) {
      terms.push_back(TermSpec::linear(i));
      coef.push_back(0.1);
    }
    const NormalizedProblem n = normalize_problem(single_response(exact_model(p, terms, coef), -1, 1));
    CHECK(ConstraintSet(n, TiMode::approximate).size() == (2 << p) + 5 * p + 2);
  }
}

TEST_CASE("corner margins for y = x1") {
  const RegressionModel m = exact_model(2, {TermSpec::intercept(), TermSpec::linear(0)}, {0.0, 1.0});
  const NormalizedProblem n = normalize_problem(single_response(m, -0.5, 0.5));
  const ResponseSurface& r = n.responses[0];
  const std::vector<double> box{-0.5, -1.0, 0.5, 1.0};
  double worst_lower = kInfinity, worst_upper = kInfinity;
  for (long c = 0; c < 4; ++c) {
    const CornerMargin cm = corner_ti_constraint(r, box, c, TiMode::approximate);
    worst_lower = std::min(worst_lower, cm.lower);
    worst_upper = std::min(worst_upper, cm.upper);
  }
  CHECK(std::abs(worst_lower) < 1e-12);
  CHECK(std::abs(worst_upper) < 1e-12);

  const std::vector<double> wide{-0.6, -1.0, 0.5, 1.0};
  const CornerMargin c0 = corner_ti_constraint(r, wide, 0, TiMode::approximate);
  CHECK(c0.lower == doctest::Approx(-0.1).epsilon(1e-12));
}

TEST_CASE("batched corner margins equal the pointwise form bitwise") {
  const GeneratedProblem g = random_problem(4, 77);
  const NormalizedProblem n = normalize_problem(g.problem);
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> x(8);
    for (int i = 0; i < 4; ++i) {
      x[static_cast<std::size_t>(i)] = rng.uniform(-1, 0);
      x[static_cast<std::size_t>(i + 4)] = rng.uniform(0, 1);
    }
    for (TiMode mode : {TiMode::approximate, TiMode::exact}) {
      std::vector<double> lo(16), hi(16);
      corner_ti_constraints(n.responses[0], x, mode, lo, hi);
      for (long c = 0; c < 16; ++c) {
        const CornerMargin cm = corner_ti_constraint(n.responses[0], x, c, mode);
        CHECK(cm.lower == lo[static_cast<std::size_t>(c)]);
        CHECK(cm.upper == hi[static_cast<std::size_t>(c)]);
      }
    }
  }
}

TEST_CASE("inner extreme of x1^2 + x2 over the unit square") {
  const RegressionModel m =
      exact_model(2, {TermSpec::intercept(), TermSpec::linear(1), TermSpec::quadratic(0)}, {0.0, 1.0, 1.0});
  const NormalizedProblem n = normalize_problem(single_response(m, -5, 5));
  const std::vector<double> lo{-1, -1}, hi{1, 1};
  const InnerExtreme up = inner_extreme_ti(n.responses[0], lo, hi, Side::upper, TiMode::exact);
  CHECK(up.value == doctest::Approx(2.0).epsilon(1e-9));
  const InnerExtreme down = inner_extreme_ti(n.responses[0], lo, hi, Side::lower, TiMode::exact);
  CHECK(down.value == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("inner extreme of a linear model is attained at a corner") {
  Rng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const int p = 3;
    std::vector<TermSpec> terms{TermSpec::intercept()};
    std::vector<double> coef{rng.uniform(-1, 1)};
    for (int i = 0; i < p; ++i) {
      terms.push_back(TermSpec::linear(i));
      coef.push_back(rng.uniform(-2, 2));
    }
    const NormalizedProblem n = normalize_problem(single_response(exact_model(p, terms, coef), -10, 10));
    const std::vector<double> lo{-0.5, -0.2, -0.9}, hi{0.4, 0.8, 0.1};
    double best = -kInfinity;
    for (int c = 0; c < 8; ++c) {
      std::vector<double> z(3);
      for (int j = 0; j < 3; ++j) z[static_cast<std::size_t>(j)] = (c >> j & 1) ? hi[static_cast<std::size_t>(j)] : lo[static_cast<std::size_t>(j)];
      best = std::max(best, n.responses[0].boundary(z, Side::upper, TiMode::exact));
    }
    const InnerExtreme e = inner_extreme_ti(n.responses[0], lo, hi, Side::upper, TiMode::exact);
    CHECK(e.value == doctest::Approx(best).epsilon(1e-10));
  }
}

TEST_CASE("inner extreme agrees with a dense grid on random quadratics") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const GeneratedProblem g = random_problem(2, seed);
    const NormalizedProblem n = normalize_problem(g.problem);
    const ResponseSurface& r = n.responses[0];
    const std::vector<double> lo{-0.7, -0.3}, hi{0.5, 0.9};
    for (Side side : {Side::lower, Side::upper}) {
      double grid = side == Side::upper ? -kInfinity : kInfinity;
      for (int i = 0; i < 41; ++i) {
        for (int j = 0; j < 41; ++j) {
          const std::vector<double> z{lo[0] + (hi[0] - lo[0]) * i / 40.0, lo[1] + (hi[1] - lo[1]) * j / 40.0};
          const double v = r.boundary(z, side, TiMode::exact);
          grid = side == Side::upper ? std::max(grid, v) : std::min(grid, v);
        }
      }
      const InnerExtreme e = inner_extreme_ti(r, lo, hi, side, TiMode::exact);
      if (side == Side::upper) {
        CHECK(e.value >= grid - 1e-9);
        CHECK(e.value <= grid + 1e-3);
      } else {
        CHECK(e.value <= grid + 1e-9);
        CHECK(e.value >= grid - 1e-3);
      }
    }
  }
}

TEST_CASE("active-set QP on a small problem") {
  // min 1/2 |x|^2 - (1, 1).x  s.t.  x1 + x2 <= 1: optimum (0.5, 0.5).
  const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd c(2);
  c << -1, -1;
  Eigen::MatrixXd G(1, 2);
  G << -1, -1;
  Eigen::VectorXd h(1);
  h << -1;
  const QpResult r = solve_active_set(H, c, G, h, Eigen::VectorXd::Zero(2));
  CHECK(r.optimal);
  CHECK(r.x(0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(r.x(1) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(r.multipliers(0) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("constrained solvers find the projection onto a half plane") {
  // min (x - 1)^2 + (y - 2)^2  s.t.  x + y <= 1: optimum (0, 1).
  ConstrainedProblem prob;
  prob.n = 2;
  prob.m = 1;
  prob.evaluate = [](std::span<const double> x, std::span<double> c) {
    c[0] = 1.0 - x[0] - x[1];
    return (x[0] - 1) * (x[0] - 1) + (x[1] - 2) * (x[1] - 2);
  };
  SolverOptions opt;
  opt.rho_begin = 0.5;
  opt.rho_end = 1e-8;
  opt.max_evaluations = 2000;
  const std::vector<double> x0{0.0, 0.0};
  for (const SolverResult& r : {cobyla(prob, x0, opt), sqp(prob, x0, opt)}) {
    CHECK(r.feasible);
    CHECK(std::abs(r.x[0] - 0.0) < 1e-5);
    CHECK(std::abs(r.x[1] - 1.0) < 1e-5);
  }
}

TEST_CASE("bounded quasi-Newton on a Rosenbrock valley") {
  const ValueGradientFn rosen = [](std::span<const double> x, std::span<double> g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2 * a - 400 * x[0] * b;
    g[1] = 200 * b;
    return a * a + 100 * b * b;
  };
  const std::vector<double> x0{-1.2, 1.0}, lo{-2, -2}, hi{2, 2};
  const BoundedResult r = minimize_bounded(rosen, x0, lo, hi, 500, 1e-10);
  CHECK(std::abs(r.x[0] - 1.0) < 1e-4);
  CHECK(std::abs(r.x[1] - 1.0) < 1e-4);
  // Active bound: the minimizer is clipped to x0 <= 0.5.
  const std::vector<double> hi2{0.5, 2};
  const BoundedResult c = minimize_bounded(rosen, x0, lo, hi2, 500, 1e-10);
  CHECK(c.x[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(c.x[1] == doctest::Approx(0.25).epsilon(1e-4));
}

TEST_CASE("parabola design space end to end") {
  const DsResult r = compute_design_space(parabola_problem());
  REQUIRE(r.feasible());
  CHECK(r.volume >= 0.99 * parabola_optimum());
  const double a = 1.0 / std::sqrt(3.0);
  CHECK(std::abs(r.parameters[0].lower + a) <= 0.01 * a);
  CHECK(std::abs(r.parameters[0].upper - a) <= 0.01 * a);
  CHECK(std::abs(r.parameters[1].lower + 1.0) <= 0.01);
  CHECK(std::abs(r.parameters[1].upper + 1.0 / 3.0) <= 0.01 / 3.0);

  // Brute force over a 201 x 201 grid of boxes [-a, a] x [-1, b].
  double brute = 0.0;
  for (int i = 0; i <= 200; ++i) {
    const double ai = i / 200.0;
    for (int j = 0; j <= 200; ++j) {
      const double b = -1.0 + 2.0 * j / 200.0;
      if (b <= -ai * ai + 1e-12) brute = std::max(brute, 2 * ai * (b + 1));
    }
  }
  CHECK(r.volume >= 0.99 * brute);
  CHECK(r.certificate.feasible);
}

TEST_CASE("unconstraining limits give the full cube") {
  const RegressionModel m = exact_model(2, {TermSpec::intercept(), TermSpec::linear(0)}, {0.0, 1.0});
  const DsResult r = compute_design_space(single_response(m, -2, 2));
  REQUIRE(r.feasible());
  CHECK(r.volume == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("infeasible setpoint names the response") {
  RegressionModel m = exact_model(2, {TermSpec::intercept(), TermSpec::linear(0)}, {0.0, 1.0}, "purity");
  const DsResult r = compute_design_space(single_response(m, 5, 6));
  CHECK(r.status == DsStatus::infeasible);
  CHECK(r.violated_response == "purity");
  CHECK(r.volume == 0.0);
}

TEST_CASE("weighted volume is the weighted product of widths") {
  DsProblem prob = six_factor_problem();
  prob.config.pass2_method = Pass2Method::none;
  apply_weights(prob, {{"x6", 3.0}});
  const DsResult r = compute_design_space(prob);
  REQUIRE(r.feasible());
  double product = 1.0;
  for (const auto& pr : r.parameters) {
    product *= (pr.normalized_upper - pr.normalized_lower);
  }
  CHECK(r.volume == doctest::Approx(product).epsilon(1e-9));
  CHECK(r.weighted_volume == doctest::Approx(3.0 * product).epsilon(1e-9));
}

TEST_CASE("result invariants on random problems") {
  for (int i = 0; i < 12; ++i) {
    const int p = 2 + i % 3;
    const GeneratedProblem g = random_problem(p, 500 + static_cast<std::uint64_t>(i));
    const DsResult r = compute_design_space(g.problem);
    if (r.status == DsStatus::infeasible) continue;
    const auto& params = g.problem.parameters;
    double product = 1.0;
    for (std::size_t j = 0; j < params.size(); ++j) {
      const auto& pr = r.parameters[j];
      CHECK(params[j].lower <= pr.lower + 1e-12);
      CHECK(pr.lower <= params[j].setpoint + 1e-9);
      CHECK(params[j].setpoint <= pr.upper + 1e-9);
      CHECK(pr.upper <= params[j].upper + 1e-12);
      product *= pr.normalized_upper - pr.normalized_lower;
    }
    CHECK(r.volume == doctest::Approx(product).epsilon(1e-9));
    CHECK(r.constraint_count == constraint_count(p, 1, true));
    if (r.feasible()) {
      CHECK(r.certificate.feasible);
      for (const auto& rc : r.certificate.responses) {
        CHECK(rc.min_lower >= rc.accept_lower - 1e-3);
        CHECK(rc.max_upper <= rc.accept_upper + 1e-3);
      }
    }
  }
}

TEST_CASE("computation is deterministic") {
  const GeneratedProblem g = random_problem(3, 31);
  DsProblem prob = g.problem;
  prob.config.starts = 3;
  const std::string a = result_to_json(compute_design_space(prob)).dump();
  const std::string b = result_to_json(compute_design_space(prob)).dump();
  CHECK(a == b);
}

TEST_CASE("tightening limits cannot enlarge the design space") {
  int compared = 0;
  for (int i = 0; i < 20; ++i) {
    const int p = 2 + i % 3;
    const GeneratedProblem g = random_problem(p, 900 + static_cast<std::uint64_t>(i));
    const DsResult wide = compute_design_space(g.problem);
    DsProblem tight = g.problem;
    auto& resp = tight.responses[0];
    const double shrink = 0.1 * (resp.accept_upper - resp.accept_lower);
    resp.accept_lower += shrink;
    resp.accept_upper -= shrink;
    const DsResult narrow = compute_design_space(tight);
    if (!wide.feasible() || !narrow.feasible()) continue;
    ++compared;
    // Widening the limits may not lose more than the solver tolerance.
    CHECK(wide.volume >= narrow.volume - 1e-4);
  }
  CHECK(compared >= 10);
}

TEST_CASE("a deadline in the past raises a timeout") {
  const GeneratedProblem g = random_problem(6, 4);
  DsProblem prob = g.problem;
  prob.config.timeout_seconds = 1e-6;
  CHECK(error_code_of([&] { compute_design_space(prob); }) == ErrorCode::timeout);
}
