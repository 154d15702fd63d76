#pragma once

// Central and noncentral chi-square distribution functions.

namespace dspace {

double chi2_cdf(double x, double df);

// Poisson(ncp/2)-weighted mixture of central chi-square CDFs.
double noncentral_chi2_cdf(double x, double df, double ncp);

// Bracketed bisection on noncentral_chi2_cdf. The bracket
// [0, df + ncp + 40*sqrt(2*(df + 2*ncp)) + 40] holds for all practical
// arguments; failures raise ErrorCode::numeric.
double noncentral_chi2_quantile(double prob, double df, double ncp);

// One degree of freedom has a closed form:
//   F(x; ncp) = Phi(sqrt(x) - sqrt(ncp)) - Phi(-sqrt(x) - sqrt(ncp)).
double noncentral_chi2_1df_cdf(double x, double ncp);
double noncentral_chi2_1df_quantile(double prob, double ncp);

// d quantile / d ncp at fixed probability, given the quantile q.
// Equals (sqrt(q)/sqrt(ncp)) * tanh(sqrt(q*ncp)), tending to q as ncp -> 0.
double noncentral_chi2_1df_quantile_slope(double q, double ncp);

}  // namespace dspace
