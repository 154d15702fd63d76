#include "dspace/constraints.hpp"

#include <algorithm>
#include <cmath>

#include "dspace/error.hpp"
#include "dspace/solvers.hpp"

namespace dspace {

namespace {

constexpr double kInactive = 1.0;  // value of a constraint against an infinite limit

std::size_t half_size(std::span<const double> x) {
  if (x.size() % 2 != 0) throw Error(ErrorCode::contract, "candidate must have an even number of entries");
  return x.size() / 2;
}

// Corner point from the bits of `index` at the response's active dimensions.
void corner_point(const ResponseSurface& r, std::span<const double> x, unsigned long active_bits, std::vector<double>& z) {
  const std::size_t d = half_size(x);
  z.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) z[i] = 0.5 * (x[i] + x[d + i]);
  const auto& act = r.active_dims();
  for (std::size_t j = 0; j < act.size(); ++j) {
    const auto dim = static_cast<std::size_t>(act[j]);
    z[dim] = ((active_bits >> j) & 1UL) ? x[d + dim] : x[dim];
  }
}

unsigned long active_key(const ResponseSurface& r, long index) {
  unsigned long key = 0;
  const auto& act = r.active_dims();
  for (std::size_t j = 0; j < act.size(); ++j) {
    if ((static_cast<unsigned long>(index) >> act[j]) & 1UL) key |= 1UL << j;
  }
  return key;
}

}  // namespace

double objective(std::span<const double> x, std::span<const double> weights) {
  const std::size_t d = half_size(x);
  if (weights.size() != d) throw Error(ErrorCode::contract, "one weight per dimension required");
  double v = 1.0;
  for (std::size_t i = 0; i < d; ++i) v *= (x[d + i] - x[i]) * weights[i];
  return v;
}

void objective_gradient(std::span<const double> x, std::span<const double> weights, std::span<double> grad) {
  const std::size_t d = half_size(x);
  if (weights.size() != d || grad.size() != x.size()) throw Error(ErrorCode::contract, "gradient size mismatch");
  for (std::size_t i = 0; i < d; ++i) {
    double others = weights[i];
    for (std::size_t j = 0; j < d; ++j) {
      if (j != i) others *= (x[d + j] - x[j]) * weights[j];
    }
    grad[i] = -others;
    grad[d + i] = others;
  }
}

long constraint_count(int dims, int responses, bool corners) {
  const long per_response = (corners ? 2L * (1L << dims) : 0L) + 2L;
  return 5L * dims + static_cast<long>(responses) * per_response;
}

CornerMargin corner_ti_constraint(const ResponseSurface& response, std::span<const double> x, long index,
                                  TiMode mode) {
  const std::size_t d = half_size(x);
  if (index < 0 || (d < 63 && index >= (1L << d))) throw Error(ErrorCode::contract, "corner index out of range");
  std::vector<double> z;
  corner_point(response, x, active_key(response, index), z);
  const auto v = response.evaluate(z, mode);
  CornerMargin out;
  out.lower = std::isinf(response.accept_lower()) ? kInactive : v.lower() - response.accept_lower();
  out.upper = std::isinf(response.accept_upper()) ? kInactive : response.accept_upper() - v.upper();
  return out;
}

void corner_ti_constraints(const ResponseSurface& response, std::span<const double> x, TiMode mode,
                           std::span<double> lower, std::span<double> upper) {
  const std::size_t d = half_size(x);
  const std::size_t corners = std::size_t{1} << d;
  if (lower.size() != corners || upper.size() != corners) {
    throw Error(ErrorCode::contract, "corner output spans must have 2^d entries");
  }
  // Unique corners of the active dimensions, evaluated once each.
  const std::size_t unique = std::size_t{1} << response.active_dims().size();
  std::vector<double> lo(unique), hi(unique);
  std::vector<double> z;
  for (std::size_t k = 0; k < unique; ++k) {
    corner_point(response, x, k, z);
    const auto v = response.evaluate(z, mode);
    lo[k] = std::isinf(response.accept_lower()) ? kInactive : v.lower() - response.accept_lower();
    hi[k] = std::isinf(response.accept_upper()) ? kInactive : response.accept_upper() - v.upper();
  }
  for (std::size_t c = 0; c < corners; ++c) {
    const unsigned long key = active_key(response, static_cast<long>(c));
    lower[c] = lo[key];
    upper[c] = hi[key];
  }
}

InnerExtreme inner_extreme_ti(const ResponseSurface& response, std::span<const double> lo_in,
                              std::span<const double> hi_in, Side side, TiMode mode, const InnerOptions& options) {
  const std::size_t d = lo_in.size();
  if (hi_in.size() != d || static_cast<int>(d) != response.dims()) {
    throw Error(ErrorCode::contract, "inner search box has the wrong dimension");
  }
  std::vector<double> lo(d), hi(d), centre(d);
  for (std::size_t i = 0; i < d; ++i) {
    lo[i] = std::min(lo_in[i], hi_in[i]);
    hi[i] = std::max(lo_in[i], hi_in[i]);
    centre[i] = 0.5 * (lo[i] + hi[i]);
  }
  // Search only over active dimensions with a non-degenerate range.
  std::vector<int> free;
  for (int dim : response.active_dims()) {
    if (hi[static_cast<std::size_t>(dim)] > lo[static_cast<std::size_t>(dim)]) free.push_back(dim);
  }
  const double sign = side == Side::lower ? 1.0 : -1.0;
  std::vector<double> z = centre;
  std::vector<double> gfull(d);

  InnerExtreme best;
  auto finish = [&](const std::vector<double>& point, double value) {
    best.point = point;
    best.value = value;
    best.mean = response.mean(point);
  };
  if (free.empty()) {
    finish(z, response.boundary(z, side, mode));
    best.converged = true;
    return best;
  }

  const std::size_t k = free.size();
  std::vector<double> rlo(k), rhi(k);
  for (std::size_t j = 0; j < k; ++j) {
    rlo[j] = lo[static_cast<std::size_t>(free[j])];
    rhi[j] = hi[static_cast<std::size_t>(free[j])];
  }
  const ValueGradientFn fn = [&](std::span<const double> y, std::span<double> g) {
    for (std::size_t j = 0; j < k; ++j) z[static_cast<std::size_t>(free[j])] = y[j];
    const double v = response.boundary(z, side, mode, gfull);
    for (std::size_t j = 0; j < k; ++j) g[j] = sign * gfull[static_cast<std::size_t>(free[j])];
    return sign * v;
  };

  const int bits = static_cast<int>(std::min<std::size_t>(k, static_cast<std::size_t>(options.max_corner_bits)));
  const long corners = 1L << bits;
  double best_obj = 0.0;
  bool have = false;
  bool any_converged = false;
  std::vector<double> start(k), best_y;
  for (long s = -1; s < corners; ++s) {
    for (std::size_t j = 0; j < k; ++j) {
      if (s < 0) {
        start[j] = 0.5 * (rlo[j] + rhi[j]);
      } else {
        const long bit = ((s >> (static_cast<long>(j) % bits)) & 1L) ^ ((static_cast<long>(j) / bits) & 1L);
        start[j] = bit ? rhi[j] : rlo[j];
      }
    }
    const BoundedResult r =
        minimize_bounded(fn, start, rlo, rhi, options.max_iterations, options.tolerance);
    any_converged = any_converged || r.converged;
    if (!have || r.f < best_obj) {
      best_obj = r.f;
      best_y = r.x;
      have = true;
    }
  }
  for (std::size_t j = 0; j < k; ++j) z[static_cast<std::size_t>(free[j])] = best_y[j];
  finish(z, sign * best_obj);
  best.converged = any_converged;
  return best;
}

ConstraintSet::ConstraintSet(const NormalizedProblem& problem, TiMode mode)
    : problem_(problem), mode_(mode) {
  const int d = problem.dims;
  corners_ = problem.config.corner_constraints && d <= problem.config.corner_cap && d < 30;
  inner_.max_iterations = problem.config.inner_max_iters;
  inner_.tolerance = problem.config.inner_tolerance;
  const char* box_kinds[] = {"order", "setpoint_lower", "setpoint_upper", "bound_lower", "bound_upper"};
  for (const char* kind : box_kinds) {
    for (int i = 0; i < d; ++i) labels_.push_back(std::string(kind) + "[" + problem.dim_names[static_cast<std::size_t>(i)] + "]");
  }
  for (const auto& r : problem.responses) {
    if (corners_) {
      for (const char* kind : {"corner_lower", "corner_upper"}) {
        for (long c = 0; c < (1L << d); ++c) labels_.push_back(std::string(kind) + "[" + r.name() + "#" + std::to_string(c) + "]");
      }
    }
    labels_.push_back("nested_lower[" + r.name() + "]");
    labels_.push_back("nested_upper[" + r.name() + "]");
  }
}

void ConstraintSet::evaluate(std::span<const double> x, std::span<double> c) const {
  const auto d = static_cast<std::size_t>(problem_.dims);
  if (x.size() != 2 * d || c.size() != labels_.size()) throw Error(ErrorCode::contract, "constraint evaluation size mismatch");
  std::size_t k = 0;
  for (std::size_t i = 0; i < d; ++i) c[k++] = x[d + i] - x[i];
  for (std::size_t i = 0; i < d; ++i) c[k++] = problem_.setpoint[i] - x[i];
  for (std::size_t i = 0; i < d; ++i) c[k++] = x[d + i] - problem_.setpoint[i];
  for (std::size_t i = 0; i < d; ++i) c[k++] = x[i] - problem_.lower[i];
  for (std::size_t i = 0; i < d; ++i) c[k++] = problem_.upper[i] - x[d + i];

  const std::span<const double> lo = x.subspan(0, d);
  const std::span<const double> hi = x.subspan(d, d);
  for (const auto& r : problem_.responses) {
    if (corners_) {
      const std::size_t corners = std::size_t{1} << d;
      corner_ti_constraints(r, x, mode_, c.subspan(k, corners), c.subspan(k + corners, corners));
      k += 2 * corners;
    }
    const bool need_lower = !std::isinf(r.accept_lower());
    const bool need_upper = !std::isinf(r.accept_upper());
    if (need_lower) {
      const InnerExtreme e = inner_extreme_ti(r, lo, hi, Side::lower, mode_, inner_);
      c[k] = e.value - r.accept_lower();
      if (!e.converged) ++diag_.inner_fallbacks;
      if (mode_ == TiMode::approximate && !r.approximation().in_domain(e.mean)) ++diag_.extrapolations;
    } else {
      c[k] = kInactive;
    }
    ++k;
    if (need_upper) {
      const InnerExtreme e = inner_extreme_ti(r, lo, hi, Side::upper, mode_, inner_);
      c[k] = r.accept_upper() - e.value;
      if (!e.converged) ++diag_.inner_fallbacks;
      if (mode_ == TiMode::approximate && !r.approximation().in_domain(e.mean)) ++diag_.extrapolations;
    } else {
      c[k] = kInactive;
    }
    ++k;
  }
}

}  // namespace dspace
