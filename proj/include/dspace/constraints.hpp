#pragma once

// Objective and inequality constraints over a candidate x of 2d normalized
// values (d lower boundaries followed by d upper boundaries).

#include <span>
#include <string>
#include <vector>

#include "dspace/normalize.hpp"

namespace dspace {

// prod_i (x[d+i] - x[i]) * w[i]. May be negative when boundaries cross.
double objective(std::span<const double> x, std::span<const double> weights);
void objective_gradient(std::span<const double> x, std::span<const double> weights, std::span<double> grad);

// Number of constraints: 5d box rows plus, per response, 2 * 2^d corner
// rows (when enabled) and 2 nested rows.
long constraint_count(int dims, int responses, bool corners);

struct CornerMargin {
  double lower = 0.0;  // ti_l - a_l
  double upper = 0.0;  // a_u - ti_u
};

// Corner `index` takes the upper boundary in dimension j when bit j is set.
CornerMargin corner_ti_constraint(const ResponseSurface& response, std::span<const double> x, long index,
                                  TiMode mode);

// All 2^d corners at once; bit-identical to the pointwise form.
void corner_ti_constraints(const ResponseSurface& response, std::span<const double> x, TiMode mode,
                           std::span<double> lower, std::span<double> upper);

struct InnerOptions {
  int max_iterations = 60;
  double tolerance = 1e-9;
  int max_corner_bits = 6;  // starts: centre plus 2^min(k, 6) corners
};

struct InnerExtreme {
  double value = 0.0;  // min lower boundary or max upper boundary
  std::vector<double> point;
  double mean = 0.0;  // predicted mean at the point
  bool converged = false;
};

// Extreme of the interval boundary over the box [lo, hi] (crossed entries
// are reordered): the minimum of the lower boundary for Side::lower, the
// maximum of the upper boundary for Side::upper.
InnerExtreme inner_extreme_ti(const ResponseSurface& response, std::span<const double> lo, std::span<const double> hi,
                              Side side, TiMode mode, const InnerOptions& options = {});

struct ConstraintDiagnostics {
  long extrapolations = 0;  // approximation evaluated outside its fit domain
  int inner_fallbacks = 0;  // inner searches without a converged start
};

class ConstraintSet {
 public:
  ConstraintSet(const NormalizedProblem& problem, TiMode mode);

  int size() const { return static_cast<int>(labels_.size()); }
  bool corners_enabled() const { return corners_; }
  TiMode mode() const { return mode_; }
  const std::vector<std::string>& labels() const { return labels_; }

  void evaluate(std::span<const double> x, std::span<double> c) const;

  const ConstraintDiagnostics& diagnostics() const { return diag_; }

 private:
  const NormalizedProblem& problem_;
  TiMode mode_;
  bool corners_;
  InnerOptions inner_;
  std::vector<std::string> labels_;
  mutable ConstraintDiagnostics diag_;
};

}  // namespace dspace
