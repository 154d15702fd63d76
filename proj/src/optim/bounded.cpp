#include <algorithm>
#include <cmath>
#include <deque>

#include "dspace/error.hpp"
#include "dspace/solvers.hpp"

namespace dspace {

// Projected limited-memory BFGS: two-loop recursion on the free variables,
// projected backtracking (Armijo) search.
BoundedResult minimize_bounded(const ValueGradientFn& fn, std::span<const double> x0, std::span<const double> lower,
                               std::span<const double> upper, int max_iterations, double tolerance, int memory) {
  const std::size_t n = x0.size();
  if (lower.size() != n || upper.size() != n) throw Error(ErrorCode::contract, "bound vectors have the wrong size");
  BoundedResult out;
  std::vector<double> x(n), g(n), xn(n), gn(n), d(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(x0[i], lower[i], upper[i]);
  double f = fn(x, g);
  ++out.evaluations;

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> pairs;

  auto is_free = [&](std::size_t i) {
    if (upper[i] - lower[i] <= 0.0) return false;
    if (x[i] <= lower[i] && g[i] > 0.0) return false;
    if (x[i] >= upper[i] && g[i] < 0.0) return false;
    return true;
  };

  for (int it = 0; it < max_iterations; ++it) {
    out.iterations = it + 1;
    double pg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (is_free(i)) pg = std::max(pg, std::abs(g[i]));
    }
    if (pg <= tolerance) {
      out.converged = true;
      break;
    }

    // Two-loop recursion restricted to the free set.
    std::vector<char> free(n);
    for (std::size_t i = 0; i < n; ++i) free[i] = is_free(i) ? 1 : 0;
    std::vector<double> q(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) q[i] = free[i] ? g[i] : 0.0;
    std::vector<double> alpha(pairs.size());
    for (std::size_t k = pairs.size(); k-- > 0;) {
      double a = 0.0;
      for (std::size_t i = 0; i < n; ++i) a += free[i] * pairs[k].s[i] * q[i];
      a *= pairs[k].rho;
      alpha[k] = a;
      for (std::size_t i = 0; i < n; ++i) q[i] -= free[i] * a * pairs[k].y[i];
    }
    double gamma = 1.0;
    if (!pairs.empty()) {
      const auto& last = pairs.back();
      double sy = 0.0, yy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sy += last.s[i] * last.y[i];
        yy += last.y[i] * last.y[i];
      }
      if (yy > 0.0) gamma = sy / yy;
    }
    for (std::size_t i = 0; i < n; ++i) q[i] *= gamma;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      double b = 0.0;
      for (std::size_t i = 0; i < n; ++i) b += free[i] * pairs[k].y[i] * q[i];
      b *= pairs[k].rho;
      for (std::size_t i = 0; i < n; ++i) q[i] += free[i] * (alpha[k] - b) * pairs[k].s[i];
    }
    double gd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = free[i] ? -q[i] : 0.0;
      gd += g[i] * d[i];
    }
    bool steepest = false;
    if (!(gd < 0.0)) {
      steepest = true;
      pairs.clear();
      gd = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        d[i] = free[i] ? -g[i] : 0.0;
        gd += g[i] * d[i];
      }
    }

    // Initial step: unit for quasi-Newton directions, bounded otherwise.
    double dmax = 0.0;
    for (double v : d) dmax = std::max(dmax, std::abs(v));
    double step = 1.0;
    if (steepest || pairs.empty()) {
      double width = 0.0;
      for (std::size_t i = 0; i < n; ++i) width = std::max(width, upper[i] - lower[i]);
      step = std::min(1.0, width / std::max(dmax, 1e-300));
    }

    bool accepted = false;
    double fn_val = f;
    for (int ls = 0; ls < 40; ++ls) {
      double decrease = 0.0;
      bool moved = false;
      for (std::size_t i = 0; i < n; ++i) {
        xn[i] = std::clamp(x[i] + step * d[i], lower[i], upper[i]);
        decrease += g[i] * (xn[i] - x[i]);
        if (xn[i] != x[i]) moved = true;
      }
      if (!moved) break;
      fn_val = fn(xn, gn);
      ++out.evaluations;
      if (fn_val <= f + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!steepest && !pairs.empty()) {
        pairs.clear();
        continue;
      }
      out.converged = true;
      break;
    }

    Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
    double sy = 0.0;
    double snorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = xn[i] - x[i];
      p.y[i] = gn[i] - g[i];
      sy += p.s[i] * p.y[i];
      snorm = std::max(snorm, std::abs(p.s[i]));
    }
    const double df = f - fn_val;
    x.swap(xn);
    g.swap(gn);
    f = fn_val;
    if (sy > 1e-12 * std::max(1e-300, snorm)) {
      p.rho = 1.0 / sy;
      pairs.push_back(std::move(p));
      if (static_cast<int>(pairs.size()) > memory) pairs.pop_front();
    }
    if (df <= 1e-14 * std::max(1.0, std::abs(f)) && snorm <= tolerance) {
      out.converged = true;
      break;
    }
  }
  out.x = x;
  out.f = f;
  return out;
}

}  // namespace dspace
