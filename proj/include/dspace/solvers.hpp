#pragma once

// Self-contained numerical solvers used by the design-space engine.

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <vector>

namespace dspace {

// minimize 1/2 x'Hx + c'x  subject to  G x >= h, from a feasible x0.
// An empty H selects the linear program. The box rows that keep a linear
// program bounded are the caller's responsibility.
struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  // one per row of G, zero off the working set
  bool optimal = false;
  int iterations = 0;
};

QpResult solve_active_set(const Eigen::MatrixXd& H, const Eigen::VectorXd& c, const Eigen::MatrixXd& G,
                          const Eigen::VectorXd& h, const Eigen::VectorXd& x0, int max_iterations = 0);

// Step for linearized constraints c + A s >= 0 inside |s|_inf <= radius:
// first the smallest achievable uniform violation t*, then the best model
// objective (linear g's, or quadratic with H) subject to c + A s >= -t*.
struct SubproblemStep {
  Eigen::VectorXd s;
  double violation = 0.0;  // t*
  Eigen::VectorXd multipliers;  // of the c + A s >= -t* rows
};

SubproblemStep solve_trust_subproblem(const Eigen::VectorXd& g, const Eigen::MatrixXd& H,
                                      const Eigen::MatrixXd& A, const Eigen::VectorXd& c, double radius);

// Problem seen by the constrained solvers: minimize f(x) subject to c(x) >= 0.
struct ConstrainedProblem {
  int n = 0;
  int m = 0;
  // Returns f(x) and writes the m constraint values.
  std::function<double(std::span<const double> x, std::span<double> c)> evaluate;
  // Optional analytic gradient of f.
  std::function<void(std::span<const double> x, std::span<double> g)> objective_gradient;
  // Called once per evaluation; may throw to abort (deadline).
  std::function<void()> checkpoint;
};

struct SolverOptions {
  double rho_begin = 0.01;
  double rho_end = 1e-6;
  int max_evaluations = 1000;
  double feasibility_tolerance = 1e-8;
};

struct SolverResult {
  std::vector<double> x;
  double f = 0.0;
  double max_violation = 0.0;
  bool feasible = false;
  int evaluations = 0;
  double rho_final = 0.0;
  bool evaluation_cap_hit = false;
  int most_violated = -1;
};

// Linear-approximation trust-region method over a simplex of n + 1 points
// (Powell's COBYLA scheme). The trust region is an infinity-norm box so the
// subproblem is a linear program.
SolverResult cobyla(const ConstrainedProblem& problem, std::span<const double> x0, const SolverOptions& options);

// Sequential quadratic programming: damped BFGS Hessian, forward-difference
// constraint Jacobian, l1 merit line search.
SolverResult sqp(const ConstrainedProblem& problem, std::span<const double> x0, const SolverOptions& options);

// Bound-constrained limited-memory quasi-Newton minimization.
struct BoundedResult {
  std::vector<double> x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

using ValueGradientFn = std::function<double(std::span<const double> x, std::span<double> grad)>;

BoundedResult minimize_bounded(const ValueGradientFn& fn, std::span<const double> x0, std::span<const double> lower,
                               std::span<const double> upper, int max_iterations, double tolerance,
                               int memory = 6);

}  // namespace dspace
