#include <algorithm>
#include <cmath>
#include <limits>

#include "dspace/error.hpp"
#include "dspace/solvers.hpp"

namespace dspace {

QpResult solve_active_set(const Eigen::MatrixXd& H, const Eigen::VectorXd& c, const Eigen::MatrixXd& G,
                          const Eigen::VectorXd& h, const Eigen::VectorXd& x0, int max_iterations) {
  const Eigen::Index n = x0.size();
  const Eigen::Index m = G.rows();
  const bool linear = H.size() == 0;
  if (max_iterations <= 0) max_iterations = static_cast<int>(20 * (n + m) + 100);

  QpResult out;
  out.x = x0;
  out.multipliers = Eigen::VectorXd::Zero(m);
  std::vector<Eigen::Index> working;
  std::vector<char> in_working(static_cast<std::size_t>(m), 0);
  Eigen::VectorXd row_norm(m);
  for (Eigen::Index i = 0; i < m; ++i) row_norm(i) = G.row(i).norm();

  int degenerate = 0;
  for (int iter = 0; iter < max_iterations; ++iter) {
    out.iterations = iter + 1;
    const Eigen::VectorXd grad = linear ? c : Eigen::VectorXd(c + H * out.x);
    const auto k = static_cast<Eigen::Index>(working.size());

    Eigen::MatrixXd q;
    Eigen::MatrixXd r;
    if (k > 0) {
      Eigen::MatrixXd gw(n, k);
      for (Eigen::Index j = 0; j < k; ++j) gw.col(j) = G.row(working[static_cast<std::size_t>(j)]).transpose();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(gw);
      q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
      r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    } else {
      q = Eigen::MatrixXd::Identity(n, n);
    }
    const Eigen::MatrixXd z = q.rightCols(n - k);

    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    if (n - k > 0) {
      const Eigen::VectorXd zg = z.transpose() * grad;
      if (linear) {
        d = -(z * zg);
      } else {
        const Eigen::MatrixXd zhz = z.transpose() * H * z;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(zhz);
        d = z * ldlt.solve(-zg);
      }
    }
    const double gscale = std::max(grad.norm(), std::numeric_limits<double>::min());
    const bool stationary = linear ? d.norm() <= 1e-12 * gscale : d.norm() <= 1e-12 * (1.0 + out.x.norm());

    if (stationary) {
      if (k == 0) {
        out.optimal = true;
        return out;
      }
      const Eigen::VectorXd lambda =
          r.triangularView<Eigen::Upper>().solve(Eigen::VectorXd(q.leftCols(k).transpose() * grad));
      // Most negative multiplier, or the smallest index once steps stall.
      const double threshold = -1e-12 * gscale;
      Eigen::Index drop = -1;
      if (degenerate > 50) {
        for (Eigen::Index j = 0; j < k; ++j) {
          if (lambda(j) < threshold &&
              (drop < 0 || working[static_cast<std::size_t>(j)] < working[static_cast<std::size_t>(drop)])) {
            drop = j;
          }
        }
      } else {
        double worst = threshold;
        for (Eigen::Index j = 0; j < k; ++j) {
          if (lambda(j) < worst) {
            worst = lambda(j);
            drop = j;
          }
        }
      }
      if (drop < 0) {
        out.optimal = true;
        for (Eigen::Index j = 0; j < k; ++j) out.multipliers(working[static_cast<std::size_t>(j)]) = lambda(j);
        return out;
      }
      in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(drop)])] = 0;
      working.erase(working.begin() + drop);
      continue;
    }

    double alpha = linear ? std::numeric_limits<double>::infinity() : 1.0;
    Eigen::Index block = -1;
    const double dnorm = d.norm();
    for (Eigen::Index i = 0; i < m; ++i) {
      if (in_working[static_cast<std::size_t>(i)]) continue;
      const double gd = G.row(i).dot(d);
      if (gd >= -1e-14 * row_norm(i) * dnorm) continue;
      const double slack = std::max(0.0, G.row(i).dot(out.x) - h(i));
      const double a = slack / -gd;
      if (a < alpha) {
        alpha = a;
        block = i;
      }
    }
    if (block < 0 && linear) {
      throw Error(ErrorCode::numeric, "linear subproblem is unbounded");
    }
    degenerate = alpha == 0.0 ? degenerate + 1 : 0;
    out.x += alpha * d;
    if (block >= 0) {
      working.push_back(block);
      in_working[static_cast<std::size_t>(block)] = 1;
    }
  }
  return out;
}

SubproblemStep solve_trust_subproblem(const Eigen::VectorXd& g, const Eigen::MatrixXd& H,
                                      const Eigen::MatrixXd& A, const Eigen::VectorXd& c, double radius) {
  const Eigen::Index n = g.size();
  const Eigen::Index m = A.rows();
  SubproblemStep out;

  // Stage 1: smallest uniform violation t of the linearized constraints.
  double t0 = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) t0 = std::max(t0, -c(i));
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(n);
  double tstar = 0.0;
  if (t0 > 0.0) {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m + 1 + 2 * n, n + 1);
    Eigen::VectorXd hv(m + 1 + 2 * n);
    G.topLeftCorner(m, n) = A;
    G.col(n).head(m).setOnes();
    hv.head(m) = -c;
    G(m, n) = 1.0;
    hv(m) = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      G(m + 1 + 2 * j, j) = 1.0;
      hv(m + 1 + 2 * j) = -radius;
      G(m + 2 + 2 * j, j) = -1.0;
      hv(m + 2 + 2 * j) = -radius;
    }
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(n + 1);
    cost(n) = 1.0;
    Eigen::VectorXd start = Eigen::VectorXd::Zero(n + 1);
    start(n) = t0;
    const QpResult lp = solve_active_set(Eigen::MatrixXd(), cost, G, hv, start);
    s1 = lp.x.head(n);
    tstar = std::max(0.0, lp.x(n));
    // Recompute from the step so that s1 is feasible for stage 2.
    double viol = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) viol = std::max(viol, -(c(i) + A.row(i).dot(s1)));
    tstar = std::max(tstar, viol);
  }
  out.violation = tstar;

  // Stage 2: model objective with the violation level held.
  Eigen::MatrixXd G(m + 2 * n, n);
  Eigen::VectorXd hv(m + 2 * n);
  G.topRows(m) = A;
  hv.head(m) = -c - Eigen::VectorXd::Constant(m, tstar);
  G.bottomRows(2 * n).setZero();
  for (Eigen::Index j = 0; j < n; ++j) {
    G(m + 2 * j, j) = 1.0;
    hv(m + 2 * j) = -radius;
    G(m + 2 * j + 1, j) = -1.0;
    hv(m + 2 * j + 1) = -radius;
  }
  const QpResult res = solve_active_set(H, g, G, hv, s1);
  out.s = res.x;
  out.multipliers = res.multipliers.head(m);
  return out;
}

}  // namespace dspace
