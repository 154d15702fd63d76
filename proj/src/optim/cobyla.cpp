#include <algorithm>
#include <cmath>
#include <limits>

#include "dspace/error.hpp"
#include "dspace/solvers.hpp"

namespace dspace {

namespace {

struct Point {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd c;
  double viol = 0.0;  // max(0, -min c)
};

double violation_of(const Eigen::VectorXd& c) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) v = std::max(v, -c(i));
  return v;
}

class Tracker {
 public:
  Tracker(const ConstrainedProblem& problem, const SolverOptions& options)
      : problem_(problem), options_(options) {}

  Point evaluate(const Eigen::VectorXd& x) {
    if (problem_.checkpoint) problem_.checkpoint();
    Point p;
    p.x = x;
    p.c.resize(problem_.m);
    p.f = problem_.evaluate(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                            std::span<double>(p.c.data(), static_cast<std::size_t>(p.c.size())));
    p.viol = violation_of(p.c);
    ++evaluations_;
    consider(p);
    return p;
  }

  int evaluations() const { return evaluations_; }
  bool exhausted() const { return evaluations_ >= options_.max_evaluations; }

  SolverResult result(double rho) const {
    SolverResult out;
    const Point& b = have_feasible_ ? best_feasible_ : least_infeasible_;
    out.x.assign(b.x.data(), b.x.data() + b.x.size());
    out.f = b.f;
    out.max_violation = b.viol;
    out.feasible = have_feasible_;
    out.evaluations = evaluations_;
    out.rho_final = rho;
    out.evaluation_cap_hit = exhausted();
    if (!have_feasible_ && b.c.size() > 0) {
      Eigen::Index idx = 0;
      b.c.minCoeff(&idx);
      out.most_violated = static_cast<int>(idx);
    }
    return out;
  }

 private:
  void consider(const Point& p) {
    if (p.viol <= options_.feasibility_tolerance) {
      if (!have_feasible_ || p.f < best_feasible_.f) {
        best_feasible_ = p;
        have_feasible_ = true;
      }
    }
    if (evaluations_ == 1 || p.viol < least_infeasible_.viol ||
        (p.viol == least_infeasible_.viol && p.f < least_infeasible_.f)) {
      least_infeasible_ = p;
    }
  }

  const ConstrainedProblem& problem_;
  const SolverOptions& options_;
  int evaluations_ = 0;
  bool have_feasible_ = false;
  Point best_feasible_;
  Point least_infeasible_;
};

double reduce_rho(double rho, double rho_end) {
  if (rho <= 16.0 * rho_end) return rho_end;
  if (rho <= 250.0 * rho_end) return std::sqrt(rho * rho_end);
  return 0.1 * rho;
}

}  // namespace

SolverResult cobyla(const ConstrainedProblem& problem, std::span<const double> x0, const SolverOptions& options) {
  const int n = problem.n;
  const int m = problem.m;
  if (static_cast<int>(x0.size()) != n || n < 1) {
    throw Error(ErrorCode::contract, "cobyla start point has the wrong size");
  }
  if (!(options.rho_begin > 0.0) || !(options.rho_end > 0.0) || options.rho_end > options.rho_begin) {
    throw Error(ErrorCode::contract, "cobyla needs 0 < rho_end <= rho_begin");
  }
  Tracker tracker(problem, options);
  double rho = options.rho_begin;
  double delta = rho;
  double mu = 0.0;
  bool after_bad_step = false;
  double last_snorm = 0.0;
  int mu_restarts = 0;

  // Initial simplex: x0 and x0 + rho e_j.
  std::vector<Point> sim;
  sim.reserve(static_cast<std::size_t>(n) + 1);
  Eigen::VectorXd base = Eigen::Map<const Eigen::VectorXd>(x0.data(), n);
  sim.push_back(tracker.evaluate(base));
  for (int j = 0; j < n && !tracker.exhausted(); ++j) {
    Eigen::VectorXd x = base;
    x(j) += rho;
    sim.push_back(tracker.evaluate(x));
  }
  if (static_cast<int>(sim.size()) < n + 1) return tracker.result(rho);

  auto merit = [&](const Point& p) { return p.f + mu * p.viol; };

  while (!tracker.exhausted()) {
    // Pole: lowest merit, then lowest violation, then lowest index.
    std::size_t pole = 0;
    for (std::size_t j = 1; j < sim.size(); ++j) {
      const double a = merit(sim[j]);
      const double b = merit(sim[pole]);
      if (a < b || (a == b && sim[j].viol < sim[pole].viol)) pole = j;
    }
    const Point& xp = sim[pole];

    // Rows of D are the displacements of the other vertices.
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < sim.size(); ++j) {
      if (j != pole) others.push_back(j);
    }
    Eigen::MatrixXd d(n, n);
    Eigen::MatrixXd rhs(n, m + 1);
    for (int r = 0; r < n; ++r) {
      const Point& v = sim[others[static_cast<std::size_t>(r)]];
      d.row(r) = (v.x - xp.x).transpose();
      rhs(r, 0) = v.f - xp.f;
      if (m > 0) rhs.row(r).tail(m) = (v.c - xp.c).transpose();
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(d);
    const bool singular = !lu.isInvertible();

    // Geometry measures: distance of each vertex to the opposite face and
    // its (infinity-norm) distance from the pole.
    Eigen::MatrixXd dinv;
    std::vector<double> vsig(static_cast<std::size_t>(n), 0.0);
    std::vector<double> veta(static_cast<std::size_t>(n), 0.0);
    bool adequate = !singular;
    if (!singular) {
      dinv = lu.inverse();
      for (int r = 0; r < n; ++r) {
        vsig[static_cast<std::size_t>(r)] = 1.0 / dinv.col(r).norm();
        veta[static_cast<std::size_t>(r)] = d.row(r).cwiseAbs().maxCoeff();
        if (vsig[static_cast<std::size_t>(r)] < 0.25 * delta || veta[static_cast<std::size_t>(r)] > 2.1 * delta) {
          adequate = false;
        }
      }
    }

    auto geometry_step = [&]() {
      // Replace the worst-placed vertex by a point along its face normal.
      int j = -1;
      double worst = 0.0;
      for (int r = 0; r < n; ++r) {
        const double e = singular ? d.row(r).norm() : veta[static_cast<std::size_t>(r)];
        if (e > 2.1 * delta && e > worst) {
          worst = e;
          j = r;
        }
      }
      Eigen::VectorXd dir;
      if (j < 0) {
        if (singular) {
          // Pick the vertex with the smallest displacement and a null direction.
          j = 0;
          for (int r = 1; r < n; ++r) {
            if (d.row(r).norm() < d.row(j).norm()) j = r;
          }
          Eigen::JacobiSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeFullV);
          dir = svd.matrixV().col(n - 1);
        } else {
          j = 0;
          for (int r = 1; r < n; ++r) {
            if (vsig[static_cast<std::size_t>(r)] < vsig[static_cast<std::size_t>(j)]) j = r;
          }
          dir = dinv.col(j);
        }
      } else if (singular) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeFullV);
        dir = svd.matrixV().col(n - 1);
      } else {
        dir = dinv.col(j);
      }
      dir *= 0.5 * delta / dir.cwiseAbs().maxCoeff();
      // Sign choice by the linear models' merit (when available).
      if (!singular) {
        const Eigen::VectorXd grads = dinv * rhs.col(0);
        auto lin = [&](const Eigen::VectorXd& s) {
          double f = xp.f + grads.dot(s);
          double v = 0.0;
          if (m > 0) {
            const Eigen::MatrixXd a = (dinv * rhs.rightCols(m)).transpose();
            v = violation_of(xp.c + a * s);
          }
          return f + mu * v;
        };
        if (lin(-dir) < lin(dir)) dir = -dir;
      }
      sim[others[static_cast<std::size_t>(j)]] = tracker.evaluate(xp.x + dir);
    };

    if (singular) {
      geometry_step();
      continue;
    }
    if (after_bad_step) {
      after_bad_step = false;
      if (!adequate) {
        geometry_step();
        continue;
      }
      if (std::max(delta, last_snorm) <= rho) {
        if (rho <= options.rho_end) break;
        rho = reduce_rho(rho, options.rho_end);
        delta = std::max(0.5 * delta, rho);
      }
    }

    // Linear models of objective and constraints.
    const Eigen::MatrixXd grads = dinv * rhs;  // n x (m+1)
    const Eigen::VectorXd gf = grads.col(0);
    const Eigen::MatrixXd a = grads.rightCols(m).transpose();  // m x n

    const SubproblemStep step = solve_trust_subproblem(gf, Eigen::MatrixXd(), a, xp.c, delta);
    const double snorm = step.s.cwiseAbs().maxCoeff();
    last_snorm = snorm;
    if (snorm < 0.5 * rho) {
      delta *= 0.1;
      if (delta <= 1.5 * rho) delta = rho;
      after_bad_step = true;
      continue;
    }

    // Penalty parameter update.
    const double pred_f = -gf.dot(step.s);  // predicted decrease of f
    const double pred_v = xp.viol - violation_of(xp.c + a * step.s);
    if (pred_v > 0.0 && pred_f < 0.0) {
      const double barmu = -pred_f / pred_v;
      if (mu < 1.5 * barmu) {
        mu = 2.0 * barmu;
        // The pole may change under the new merit.
        bool moved = false;
        for (std::size_t j = 0; j < sim.size(); ++j) {
          if (j != pole && merit(sim[j]) < merit(xp)) moved = true;
        }
        if (moved && mu_restarts < 3) {
          ++mu_restarts;
          continue;
        }
      }
    }
    mu_restarts = 0;
    const double prerem = pred_f + mu * pred_v;
    const Point xn = tracker.evaluate(xp.x + step.s);
    const double ared = merit(xp) - merit(xn);
    const double ratio = prerem > 0.0 ? ared / prerem : (ared > 0.0 ? 1.0 : -1.0);

    if (ratio <= 0.1) {
      delta = 0.5 * delta;
    } else if (ratio >= 0.7) {
      delta = std::max(delta, 2.0 * snorm);
    }
    if (delta <= 1.5 * rho) delta = rho;

    // Vertex to replace: largest volume factor weighted by distance.
    const bool improved = ared > 0.0;
    const Eigen::VectorXd sig = dinv.transpose() * step.s;
    const Eigen::VectorXd anchor = improved ? xn.x : xp.x;
    int jdrop = -1;
    double best = improved ? -1.0 : 1.0;
    for (int r = 0; r < n; ++r) {
      const double dist = (sim[others[static_cast<std::size_t>(r)]].x - anchor).cwiseAbs().maxCoeff();
      const double w = std::max(1.0, dist / delta);
      const double score = std::abs(sig(r)) * w * w;
      if (score > best) {
        best = score;
        jdrop = r;
      }
    }
    if (jdrop >= 0) sim[others[static_cast<std::size_t>(jdrop)]] = xn;
    if (ratio <= 0.1) after_bad_step = true;
  }
  return tracker.result(rho);
}

}  // namespace dspace
