#include "dspace/chi2.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <sstream>

#include "dspace/error.hpp"

namespace dspace {

namespace {

constexpr int kSeriesCap = 20000;
constexpr int kBisectionCap = 2000;

void check_args(double df, double ncp) {
  if (!(df > 0.0) || !std::isfinite(df)) {
    throw Error(ErrorCode::contract, "chi-square degrees of freedom must be positive");
  }
  if (!(ncp >= 0.0) || !std::isfinite(ncp)) {
    throw Error(ErrorCode::contract, "noncentrality must be finite and non-negative");
  }
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

}  // namespace

double chi2_cdf(double x, double df) {
  check_args(df, 0.0);
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(0.5 * df, 0.5 * x);
}

double noncentral_chi2_cdf(double x, double df, double ncp) {
  check_args(df, ncp);
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (ncp == 0.0) return chi2_cdf(x, df);

  // Sum outward from the Poisson mode so the largest weights come first.
  const double lambda = 0.5 * ncp;
  const double half_x = 0.5 * x;
  const double mode = std::floor(lambda);
  const double w_mode = std::exp(-lambda + mode * std::log(lambda) - std::lgamma(mode + 1.0));

  double sum = w_mode * boost::math::gamma_p(0.5 * df + mode, half_x);
  int iterations = 0;

  double w = w_mode;
  for (double j = mode + 1.0;; j += 1.0) {
    w *= lambda / j;
    const double term = w * boost::math::gamma_p(0.5 * df + j, half_x);
    sum += term;
    if (w < 1e-17 || term < 1e-17 * sum) break;
    if (++iterations > kSeriesCap) {
      std::ostringstream msg;
      msg << "noncentral chi-square series did not converge (x=" << x << ", df=" << df
          << ", ncp=" << ncp << ")";
      throw Error(ErrorCode::numeric, msg.str());
    }
  }
  w = w_mode;
  for (double j = mode; j >= 1.0; j -= 1.0) {
    w *= j / lambda;
    sum += w * boost::math::gamma_p(0.5 * df + j - 1.0, half_x);
    if (w < 1e-17) break;
  }
  return std::min(1.0, sum);
}

double noncentral_chi2_quantile(double prob, double df, double ncp) {
  check_args(df, ncp);
  if (!(prob > 0.0 && prob < 1.0)) {
    throw Error(ErrorCode::contract, "quantile probability must lie in (0,1)");
  }
  double lo = 0.0;
  double hi = df + ncp + 40.0 * std::sqrt(2.0 * (df + 2.0 * ncp)) + 40.0;
  if (noncentral_chi2_cdf(hi, df, ncp) < prob) {
    std::ostringstream msg;
    msg << "quantile bracket too small (prob=" << prob << ", df=" << df << ", ncp=" << ncp
        << ", upper=" << hi << ")";
    throw Error(ErrorCode::numeric, msg.str());
  }
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < kBisectionCap; ++it) {
    mid = 0.5 * (lo + hi);
    const double f = noncentral_chi2_cdf(mid, df, ncp);
    if (hi - lo <= 1e-9 && std::abs(f - prob) <= 1e-12) return mid;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return mid;
    if (f < prob) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  std::ostringstream msg;
  msg << "quantile bisection did not converge (prob=" << prob << ", df=" << df << ", ncp=" << ncp << ")";
  throw Error(ErrorCode::numeric, msg.str());
}

double noncentral_chi2_1df_cdf(double x, double ncp) {
  check_args(1.0, ncp);
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double u = std::sqrt(x);
  const double s = std::sqrt(ncp);
  return normal_cdf(u - s) - normal_cdf(-u - s);
}

double noncentral_chi2_1df_quantile(double prob, double ncp) {
  check_args(1.0, ncp);
  if (!(prob > 0.0 && prob < 1.0)) {
    throw Error(ErrorCode::contract, "quantile probability must lie in (0,1)");
  }
  // Safeguarded Newton in u = sqrt(q); G(u) is increasing on u >= 0.
  const double s = std::sqrt(ncp);
  double lo = 0.0;
  double hi = std::sqrt(1.0 + ncp + 40.0 * std::sqrt(2.0 * (1.0 + 2.0 * ncp)) + 40.0);
  auto g = [&](double u) { return normal_cdf(u - s) - normal_cdf(-u - s) - prob; };
  double u = s + 2.0;
  if (u >= hi) u = 0.5 * hi;
  for (int it = 0; it < 200; ++it) {
    const double gu = g(u);
    if (gu == 0.0) break;
    if (gu < 0.0) {
      lo = u;
    } else {
      hi = u;
    }
    const double slope = normal_pdf(u - s) + normal_pdf(u + s);
    double next = slope > 0.0 ? u - gu / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - u) <= 1e-15 * std::max(1.0, u)) {
      u = next;
      break;
    }
    u = next;
    if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
  }
  return u * u;
}

double noncentral_chi2_1df_quantile_slope(double q, double ncp) {
  const double u = std::sqrt(std::max(q, 0.0));
  const double s = std::sqrt(std::max(ncp, 0.0));
  const double us = u * s;
  if (us < 1e-8) return q;  // tanh(us)/s -> u
  return (u / s) * std::tanh(us);
}

}  // namespace dspace
