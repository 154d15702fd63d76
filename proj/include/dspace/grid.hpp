#pragma once

// Grid-discretization baseline: evaluate every point of an equidistant grid
// over the normalized cube, then search exhaustively for the largest
// grid-aligned box whose enclosed points are all feasible.

#include <cstdint>
#include <span>
#include <vector>

#include "dspace/normalize.hpp"
#include "dspace/problem.hpp"

namespace dspace {

inline constexpr int kGridMaxDims = 6;

struct GridSpec {
  int resolution = 9;        // points per dimension, endpoints included
  bool allow_large = false;  // lifts the dimension guard

  void validate() const;
};

// Points per dimension are coordinate(i) = -1 + 2 i / (resolution - 1).
// Flattened index: the first dimension varies slowest.
struct FeasibilityTensor {
  int dims = 0;
  int resolution = 0;
  std::vector<std::uint8_t> feasible;

  double coordinate(int index) const;
  std::size_t size() const { return feasible.size(); }
  std::size_t flat(std::span<const int> index) const;
  bool at(std::span<const int> index) const { return feasible[flat(index)] != 0; }
};

// True where every response's exact interval lies within its limits.
FeasibilityTensor evaluate_grid(const NormalizedProblem& problem, const GridSpec& spec);

// Per dimension, the box [lo, hi] (indices) must satisfy lo <= must_lo and
// hi >= must_hi. A setpoint on grid index k gives must_lo = must_hi = k; one
// strictly between k and k + 1 gives (k, k + 1).
struct SetpointCell {
  std::vector<int> must_lo;
  std::vector<int> must_hi;
};

SetpointCell setpoint_cell(std::span<const double> setpoint, int resolution);

struct GridBox {
  bool found = false;
  std::vector<int> lo;
  std::vector<int> hi;
  std::uint64_t index_volume = 0;  // product of (hi - lo)
  double volume = 0.0;             // normalized units
  std::uint64_t boxes_examined = 0;
};

// Exact search. Among boxes of maximal volume the lexicographically
// smallest lower-index vector wins (then the smallest upper-index vector).
GridBox largest_feasible_box(const FeasibilityTensor& tensor, const SetpointCell& cell);

struct GridOutcome {
  DsResult result;
  GridSpec spec;
  std::uint64_t points = 0;
  std::uint64_t feasible_points = 0;
  GridBox box;
};

// Full baseline pipeline on a problem definition. The result reuses the
// engine's description (ranges, level sets, certificate): a grid box that
// is feasible on the grid but violates the limits between grid points is
// reported as infeasible at tolerance.
GridOutcome compute_grid_design_space(const DsProblem& problem, const GridSpec& spec);

}  // namespace dspace
