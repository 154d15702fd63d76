#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dspace/constraints.hpp"
#include "dspace/problem.hpp"
#include "dspace/solvers.hpp"

namespace dspace {

struct PassConfig {
  int pass = 1;
  int start = 0;
  TiMode mode = TiMode::approximate;
  Pass2Method method = Pass2Method::cobyla;  // cobyla or slsqp
  double rho_begin = 0.01;
  double rho_end = 1e-6;
  int max_evaluations = 1000;
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct PassOutcome {
  std::vector<double> x;
  bool feasible = false;
  PassTrace trace;
};

// One optimization pass from `start` (2d normalized values).
PassOutcome run_pass(const NormalizedProblem& problem, std::span<const double> start, const PassConfig& config);

// Box [s - h, s + h] clipped to the screening cube.
std::vector<double> initial_candidate(const NormalizedProblem& problem, double half_width);

// Post-hoc exact-interval verification of the box [lo, hi] (normalized).
// Categorical dimensions are evaluated only at the coordinates listed in
// `levels_coords` (one list per dimension; empty for continuous ones).
Certificate verify_box(const NormalizedProblem& problem, std::span<const double> lo, std::span<const double> hi,
                       const std::vector<std::vector<double>>& level_coords, double tolerance = 1e-3,
                       long samples_per_dim = 1000);

// Fills ranges, level sets, candidate, volumes and the certificate of `res`
// for the normalized box x. Returns false when a relaxed categorical range
// admits no level.
bool describe_box(const DsProblem& problem, const NormalizedProblem& normalized, std::span<const double> x,
                  DsResult& res);

DsResult compute_design_space(const DsProblem& problem);

}  // namespace dspace
