#include <algorithm>
#include <cmath>
#include <limits>

#include "dspace/error.hpp"
#include "dspace/solvers.hpp"

namespace dspace {

namespace {

constexpr double kQpRadius = 0.5;

struct Eval {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd c;
};

double l1_violation(const Eigen::VectorXd& c) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) v += std::max(0.0, -c(i));
  return v;
}

double max_violation(const Eigen::VectorXd& c) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) v = std::max(v, -c(i));
  return v;
}

}  // namespace

SolverResult sqp(const ConstrainedProblem& problem, std::span<const double> x0, const SolverOptions& options) {
  const int n = problem.n;
  const int m = problem.m;
  if (static_cast<int>(x0.size()) != n || n < 1) throw Error(ErrorCode::contract, "sqp start point has the wrong size");

  int evaluations = 0;
  bool have_feasible = false;
  Eval best_feasible;
  Eval least_infeasible;
  double least_viol = std::numeric_limits<double>::infinity();

  auto evaluate = [&](const Eigen::VectorXd& x) {
    if (problem.checkpoint) problem.checkpoint();
    Eval e;
    e.x = x;
    e.c.resize(m);
    e.f = problem.evaluate(std::span<const double>(x.data(), static_cast<std::size_t>(n)),
                           std::span<double>(e.c.data(), static_cast<std::size_t>(m)));
    ++evaluations;
    const double v = max_violation(e.c);
    if (v <= options.feasibility_tolerance && (!have_feasible || e.f < best_feasible.f)) {
      best_feasible = e;
      have_feasible = true;
    }
    if (v < least_viol || (v == least_viol && e.f < least_infeasible.f)) {
      least_viol = v;
      least_infeasible = e;
    }
    return e;
  };
  auto exhausted = [&] { return evaluations >= options.max_evaluations; };

  auto gradient = [&](const Eval& at, Eigen::VectorXd& g, Eigen::MatrixXd& jac) -> bool {
    g.resize(n);
    jac.resize(m, n);
    if (problem.objective_gradient) {
      problem.objective_gradient(std::span<const double>(at.x.data(), static_cast<std::size_t>(n)),
                                 std::span<double>(g.data(), static_cast<std::size_t>(n)));
    }
    for (int j = 0; j < n; ++j) {
      if (exhausted()) return false;
      const double h = 1e-7 * std::max(1.0, std::abs(at.x(j)));
      Eigen::VectorXd xp = at.x;
      xp(j) += h;
      const Eval e = evaluate(xp);
      jac.col(j) = (e.c - at.c) / h;
      if (!problem.objective_gradient) g(j) = (e.f - at.f) / h;
    }
    return true;
  };

  Eval cur = evaluate(Eigen::Map<const Eigen::VectorXd>(x0.data(), n));
  Eigen::VectorXd g;
  Eigen::MatrixXd jac;
  double rho = options.rho_begin;
  if (gradient(cur, g, jac)) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Identity(n, n) * std::max(g.norm(), 1e-12);
    double penalty = 0.0;
    while (!exhausted()) {
      const SubproblemStep step = solve_trust_subproblem(g, b, jac, cur.c, kQpRadius);
      const double snorm = step.s.cwiseAbs().maxCoeff();
      rho = snorm;
      if (snorm <= options.rho_end) break;
      const double lam_max = step.multipliers.size() > 0 ? step.multipliers.cwiseAbs().maxCoeff() : 0.0;
      penalty = std::max(penalty, 1.1 * lam_max + 1e-12);

      const double merit0 = cur.f + penalty * l1_violation(cur.c);
      const double lin_viol = l1_violation(cur.c + jac * step.s);
      const double slope = g.dot(step.s) + penalty * (lin_viol - l1_violation(cur.c));
      double alpha = 1.0;
      bool accepted = false;
      Eval next;
      for (int ls = 0; ls < 20 && !exhausted(); ++ls) {
        next = evaluate(cur.x + alpha * step.s);
        const double merit = next.f + penalty * l1_violation(next.c);
        if (merit <= merit0 + 1e-4 * alpha * std::min(slope, 0.0) || (slope >= 0.0 && merit < merit0)) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;

      Eigen::VectorXd g_next;
      Eigen::MatrixXd jac_next;
      if (!gradient(next, g_next, jac_next)) break;
      const Eigen::VectorXd s = next.x - cur.x;
      Eigen::VectorXd y = (g_next - jac_next.transpose() * step.multipliers) - (g - jac.transpose() * step.multipliers);
      const Eigen::VectorXd bs = b * s;
      const double sbs = s.dot(bs);
      const double sy = s.dot(y);
      if (sbs > 0.0) {
        // Powell damping keeps the update positive definite.
        if (sy < 0.2 * sbs) {
          const double theta = 0.8 * sbs / (sbs - sy);
          y = theta * y + (1.0 - theta) * bs;
        }
        b += (y * y.transpose()) / s.dot(y) - (bs * bs.transpose()) / sbs;
        b = 0.5 * (b + b.transpose());
      }
      cur = next;
      g = g_next;
      jac = jac_next;
    }
  }

  SolverResult out;
  const Eval& pick = have_feasible ? best_feasible : least_infeasible;
  out.x.assign(pick.x.data(), pick.x.data() + n);
  out.f = pick.f;
  out.max_violation = max_violation(pick.c);
  out.feasible = have_feasible;
  out.evaluations = evaluations;
  out.rho_final = rho;
  out.evaluation_cap_hit = exhausted();
  if (!have_feasible && m > 0) {
    Eigen::Index idx = 0;
    pick.c.minCoeff(&idx);
    out.most_violated = static_cast<int>(idx);
  }
  return out;
}

}  // namespace dspace
