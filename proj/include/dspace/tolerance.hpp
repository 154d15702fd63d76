#pragma once

// Tolerance intervals for OLS predictions and their quadratic approximation.
//
// Convention: `psi` is the probability at which the one-degree-of-freedom
// noncentral chi-square quantile is taken (the coverage content, e.g. 0.99),
// `alpha` the probability of the central chi-square quantile with n - p
// degrees of freedom in the denominator (e.g. 0.05 for 95 % confidence).
// The half-width at a point with leverage h = x'(X'X)^-1 x is
//
//   sigma * sqrt((n - p) * q1(psi; ncp = h) / q(n - p; alpha)),
//
// since the effective number of observations is sigma^2 / se^2 = 1 / h.

#include <Eigen/Dense>

#include <functional>
#include <span>

#include "dspace/model.hpp"

namespace dspace {

struct TiSpec {
  double alpha = 0.05;
  double psi = 0.99;

  void validate() const;
};

struct TiBounds {
  double lower = 0.0;
  double upper = 0.0;

  double half_width() const { return 0.5 * (upper - lower); }
};

// Exact interval for one model; caches the denominator quantile.
class ExactTi {
 public:
  ExactTi(int residual_df, double sigma2, const TiSpec& spec);
  explicit ExactTi(const RegressionModel& model, const TiSpec& spec)
      : ExactTi(model.residual_df(), model.sigma2, spec) {}

  double half_width(double leverage) const;
  // d half_width / d leverage.
  double half_width_slope(double leverage) const;
  // Both at once (one quantile evaluation).
  double half_width(double leverage, double* slope) const;

  double sigma2() const { return sigma2_; }
  const TiSpec& spec() const { return spec_; }

 private:
  double sigma2_;
  double residual_df_;
  double denominator_;  // central chi-square quantile at alpha
  TiSpec spec_;
};

TiBounds exact_ti(const RegressionModel& model, const Eigen::Ref<const Eigen::VectorXd>& row,
                  const TiSpec& spec);

// sigma2 / se^2 at `row`; below 1 the point is poorly supported by the data.
double effective_observations(const RegressionModel& model,
                              const Eigen::Ref<const Eigen::VectorXd>& row);

// Face-centred central composite design: 2^p corners, 2p axial points at
// distance 1, five centre replicates, in that order.
struct CcdPlan {
  int dims = 0;
  Eigen::MatrixXd points;
};

CcdPlan generate_ccd(int p);

// Quadratic mapping from the predicted mean to the interval half-width.
struct TiApproximation {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double domain_min = 0.0;
  double domain_max = 0.0;
  double fit_residual_max = 0.0;

  // Clamped at zero.
  double half_width(double y) const {
    const double w = c0 + c1 * y + c2 * (y * y);
    return w > 0.0 ? w : 0.0;
  }
  // Derivative of the clamped width.
  double half_width_slope(double y) const {
    const double w = c0 + c1 * y + c2 * (y * y);
    return w > 0.0 ? c1 + 2.0 * c2 * y : 0.0;
  }
  bool in_domain(double y) const { return y >= domain_min && y <= domain_max; }
};

TiBounds approx_ti(const TiApproximation& approx, double y);

// Batched form of approx_ti: row-wise [1, y, y^2] . (c0, c1, c2).
void approx_ti(const TiApproximation& approx, std::span<const double> y, std::span<double> lower,
               std::span<double> upper);

// Least-squares fit of widths on [1, y, y^2]. Constant (or near constant)
// means collapse to c0 = mean width.
TiApproximation fit_width_polynomial(std::span<const double> means, std::span<const double> widths);

// Maps a design point to the model's term row.
using TermRowMapper = std::function<Eigen::VectorXd(std::span<const double>)>;

// Evaluates the exact interval on every design point and fits the width
// polynomial. Without a mapper the design coordinates are taken as the
// model's (continuous) factor values.
TiApproximation build_ti_approximation(const RegressionModel& model, const TiSpec& spec,
                                       const CcdPlan& ccd, const TermRowMapper& mapper = {});

// Same, with a caller-supplied (mean, exact half-width) evaluator.
using MeanWidthFn = std::function<std::pair<double, double>(std::span<const double>)>;
TiApproximation build_ti_approximation(const CcdPlan& ccd, const MeanWidthFn& evaluate);

}  // namespace dspace
