#include "dspace/tolerance.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "dspace/chi2.hpp"
#include "dspace/error.hpp"

namespace dspace {

void TiSpec::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::specification, "alpha must lie in (0,1), got " + std::to_string(alpha));
  }
  if (!(psi > 0.0 && psi < 1.0)) {
    throw Error(ErrorCode::specification, "psi must lie in (0,1), got " + std::to_string(psi));
  }
}

ExactTi::ExactTi(int residual_df, double sigma2, const TiSpec& spec)
    : sigma2_(sigma2), residual_df_(residual_df), denominator_(0.0), spec_(spec) {
  spec.validate();
  if (residual_df < 1) {
    throw Error(ErrorCode::contract, "tolerance interval needs n - p >= 1");
  }
  if (!(sigma2 >= 0.0)) {
    throw Error(ErrorCode::contract, "sigma2 must be non-negative");
  }
  denominator_ = noncentral_chi2_quantile(spec.alpha, residual_df_, 0.0);
}

double ExactTi::half_width(double leverage, double* slope) const {
  if (sigma2_ == 0.0) {
    if (slope) *slope = 0.0;
    return 0.0;
  }
  if (!(leverage > 0.0)) {
    throw Error(ErrorCode::degenerate_point,
                "prediction standard error is zero while sigma2 > 0 (leverage " + std::to_string(leverage) + ")");
  }
  const double q = noncentral_chi2_1df_quantile(spec_.psi, leverage);
  const double width = std::sqrt(sigma2_ * residual_df_ * q / denominator_);
  if (slope) {
    *slope = q > 0.0 ? width / (2.0 * q) * noncentral_chi2_1df_quantile_slope(q, leverage) : 0.0;
  }
  return width;
}

double ExactTi::half_width(double leverage) const { return half_width(leverage, nullptr); }

double ExactTi::half_width_slope(double leverage) const {
  double slope = 0.0;
  half_width(leverage, &slope);
  return slope;
}

TiBounds exact_ti(const RegressionModel& model, const Eigen::Ref<const Eigen::VectorXd>& row,
                  const TiSpec& spec) {
  const Prediction pred = predict(model, row);
  if (model.sigma2 == 0.0) return {pred.mean, pred.mean};
  const ExactTi ti(model, spec);
  const double w = ti.half_width(leverage(model, row));
  return {pred.mean - w, pred.mean + w};
}

double effective_observations(const RegressionModel& model,
                              const Eigen::Ref<const Eigen::VectorXd>& row) {
  const double h = leverage(model, row);
  return h > 0.0 ? 1.0 / h : INFINITY;
}

CcdPlan generate_ccd(int p) {
  if (p < 1 || p > 14) {
    throw Error(ErrorCode::capacity, "central composite design supports 1..14 dimensions, got " +
                                         std::to_string(p));
  }
  const int corners = 1 << p;
  CcdPlan plan;
  plan.dims = p;
  plan.points = Eigen::MatrixXd::Zero(corners + 2 * p + 5, p);
  for (int r = 0; r < corners; ++r) {
    for (int j = 0; j < p; ++j) plan.points(r, j) = ((r >> j) & 1) ? 1.0 : -1.0;
  }
  for (int j = 0; j < p; ++j) {
    plan.points(corners + 2 * j, j) = -1.0;
    plan.points(corners + 2 * j + 1, j) = 1.0;
  }
  return plan;
}

TiBounds approx_ti(const TiApproximation& approx, double y) {
  const double w = approx.half_width(y);
  return {y - w, y + w};
}

void approx_ti(const TiApproximation& approx, std::span<const double> y, std::span<double> lower,
               std::span<double> upper) {
  if (lower.size() != y.size() || upper.size() != y.size()) {
    throw Error(ErrorCode::contract, "approx_ti output spans must match the input size");
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w = approx.half_width(y[i]);
    lower[i] = y[i] - w;
    upper[i] = y[i] + w;
  }
}

TiApproximation fit_width_polynomial(std::span<const double> means, std::span<const double> widths) {
  if (means.size() != widths.size() || means.empty()) {
    throw Error(ErrorCode::contract, "width regression needs matching, non-empty inputs");
  }
  const auto n = static_cast<Eigen::Index>(means.size());
  TiApproximation out;
  const auto [ymin, ymax] = std::minmax_element(means.begin(), means.end());
  out.domain_min = *ymin;
  out.domain_max = *ymax;

  const double scale = std::max({1.0, std::abs(*ymin), std::abs(*ymax)});
  if (*ymax - *ymin <= 1e-12 * scale) {
    double mean_w = 0.0;
    for (double w : widths) mean_w += w;
    out.c0 = mean_w / static_cast<double>(n);
    for (double w : widths) out.fit_residual_max = std::max(out.fit_residual_max, std::abs(w - out.c0));
    return out;
  }

  // Fit on a centred, scaled variable and map back: conditioning of
  // [1, y, y^2] degrades quickly for responses far from zero.
  const double centre = 0.5 * (*ymin + *ymax);
  const double half = 0.5 * (*ymax - *ymin);
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = (means[static_cast<std::size_t>(i)] - centre) / half;
    a(i, 0) = 1.0;
    a(i, 1) = t;
    a(i, 2) = t * t;
    b(i) = widths[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d g = a.completeOrthogonalDecomposition().solve(b);
  // w = g0 + g1 t + g2 t^2 with t = (y - centre) / half.
  out.c2 = g(2) / (half * half);
  out.c1 = g(1) / half - 2.0 * g(2) * centre / (half * half);
  out.c0 = g(0) - g(1) * centre / half + g(2) * centre * centre / (half * half);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = means[static_cast<std::size_t>(i)];
    out.fit_residual_max =
        std::max(out.fit_residual_max, std::abs(out.half_width(y) - widths[static_cast<std::size_t>(i)]));
  }
  return out;
}

TiApproximation build_ti_approximation(const RegressionModel& model, const TiSpec& spec,
                                       const CcdPlan& ccd, const TermRowMapper& mapper) {
  if (!mapper && ccd.dims != static_cast<int>(model.factors.size())) {
    throw Error(ErrorCode::contract, "design has " + std::to_string(ccd.dims) + " dimensions, model has " +
                                         std::to_string(model.factors.size()) + " factors");
  }
  const ExactTi ti(model, spec);
  const auto rows = static_cast<std::size_t>(ccd.points.rows());
  std::vector<double> means(rows);
  std::vector<double> widths(rows);
  std::vector<double> point(static_cast<std::size_t>(ccd.dims));
  for (std::size_t r = 0; r < rows; ++r) {
    for (int j = 0; j < ccd.dims; ++j) point[static_cast<std::size_t>(j)] = ccd.points(static_cast<Eigen::Index>(r), j);
    const Eigen::VectorXd row = mapper ? mapper(point) : expand_point(point, model.terms, model.factors);
    means[r] = row.dot(model.beta);
    widths[r] = ti.half_width(leverage(model, row));
  }
  return fit_width_polynomial(means, widths);
}

TiApproximation build_ti_approximation(const CcdPlan& ccd, const MeanWidthFn& evaluate) {
  const auto rows = static_cast<std::size_t>(ccd.points.rows());
  std::vector<double> means(rows);
  std::vector<double> widths(rows);
  std::vector<double> point(static_cast<std::size_t>(ccd.dims));
  for (std::size_t r = 0; r < rows; ++r) {
    for (int j = 0; j < ccd.dims; ++j) point[static_cast<std::size_t>(j)] = ccd.points(static_cast<Eigen::Index>(r), j);
    std::tie(means[r], widths[r]) = evaluate(point);
  }
  return fit_width_polynomial(means, widths);
}

}  // namespace dspace
