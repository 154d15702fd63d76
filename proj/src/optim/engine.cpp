#include "dspace/engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dspace/error.hpp"
#include "dspace/rng.hpp"

namespace dspace {

namespace {

constexpr double kFeasibilityTolerance = 1e-8;
constexpr long kMaxLevelCombinations = 4096;

double unweighted_volume(std::span<const double> x) {
  const std::size_t d = x.size() / 2;
  double v = 1.0;
  for (std::size_t i = 0; i < d; ++i) v *= x[d + i] - x[i];
  return v;
}

double max_violation(std::span<const double> c, int* worst = nullptr) {
  double v = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (-c[i] > v) {
      v = -c[i];
      if (worst) *worst = static_cast<int>(i);
    }
  }
  return v;
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

void check_deadline(const std::optional<std::chrono::steady_clock::time_point>& deadline) {
  if (deadline && std::chrono::steady_clock::now() > *deadline) {
    throw Error(ErrorCode::timeout, "design-space computation exceeded its deadline");
  }
}

std::vector<double> perturbed_candidate(const NormalizedProblem& problem, double half_width, Rng& rng) {
  const auto d = static_cast<std::size_t>(problem.dims);
  std::vector<double> x(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    const double s = problem.setpoint[i];
    const double down = half_width * (0.5 + 1.5 * rng.uniform());
    const double up = half_width * (0.5 + 1.5 * rng.uniform());
    x[i] = std::max(problem.lower[i], s - down);
    x[d + i] = std::min(problem.upper[i], s + up);
  }
  return x;
}

}  // namespace

std::vector<double> initial_candidate(const NormalizedProblem& problem, double half_width) {
  const auto d = static_cast<std::size_t>(problem.dims);
  std::vector<double> x(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    x[i] = std::max(problem.lower[i], problem.setpoint[i] - half_width);
    x[d + i] = std::min(problem.upper[i], problem.setpoint[i] + half_width);
  }
  return x;
}

PassOutcome run_pass(const NormalizedProblem& problem, std::span<const double> start, const PassConfig& config) {
  const int d = problem.dims;
  if (static_cast<int>(start.size()) != 2 * d) throw Error(ErrorCode::contract, "start candidate must have 2d entries");
  const ConstraintSet constraints(problem, config.mode);

  ConstrainedProblem cp;
  cp.n = 2 * d;
  cp.m = constraints.size();
  cp.evaluate = [&](std::span<const double> x, std::span<double> c) {
    constraints.evaluate(x, c);
    return -objective(x, problem.weights);
  };
  cp.objective_gradient = [&](std::span<const double> x, std::span<double> g) {
    objective_gradient(x, problem.weights, g);
    for (double& v : g) v = -v;
  };
  cp.checkpoint = [&] { check_deadline(config.deadline); };

  SolverOptions options;
  options.rho_begin = config.rho_begin;
  options.rho_end = std::min(config.rho_end, config.rho_begin);
  options.max_evaluations = config.max_evaluations;
  options.feasibility_tolerance = kFeasibilityTolerance;
  const SolverResult sr = config.method == Pass2Method::slsqp ? sqp(cp, start, options) : cobyla(cp, start, options);

  PassOutcome out;
  out.x = sr.x;
  out.feasible = sr.feasible;
  PassTrace& t = out.trace;
  t.pass = config.pass;
  t.method = config.method == Pass2Method::slsqp ? "slsqp" : "cobyla";
  t.ti_mode = config.mode == TiMode::exact ? "exact" : "approximate";
  t.start = config.start;
  t.evaluations = sr.evaluations;
  t.constraints = constraints.size();
  t.feasible = sr.feasible;
  t.volume = unweighted_volume(sr.x);
  t.weighted_volume = objective(sr.x, problem.weights);
  t.max_violation = sr.max_violation;
  t.rho_final = sr.rho_final;
  t.extrapolations = constraints.diagnostics().extrapolations;
  t.inner_fallbacks = constraints.diagnostics().inner_fallbacks;
  if (sr.most_violated >= 0) t.most_violated = constraints.labels()[static_cast<std::size_t>(sr.most_violated)];
  if (sr.evaluation_cap_hit) t.warnings.push_back("evaluation cap reached; best candidate so far returned");
  if (t.inner_fallbacks > 0) t.warnings.push_back("inner extreme search fell back to its best sampled point");
  if (t.extrapolations > 0) t.warnings.push_back("interval approximation evaluated outside its fit domain");
  t.candidate = sr.x;
  if (config.mode == TiMode::exact) {
    t.exact_max_violation = sr.max_violation;
  } else {
    const ConstraintSet exact(problem, TiMode::exact);
    std::vector<double> c(static_cast<std::size_t>(exact.size()));
    exact.evaluate(sr.x, c);
    t.exact_max_violation = max_violation(c);
  }
  return out;
}

Certificate verify_box(const NormalizedProblem& problem, std::span<const double> lo, std::span<const double> hi,
                       const std::vector<std::vector<double>>& level_coords, double tolerance,
                       long samples_per_dim) {
  const auto d = static_cast<std::size_t>(problem.dims);
  if (lo.size() != d || hi.size() != d || level_coords.size() != d) {
    throw Error(ErrorCode::contract, "verification box has the wrong dimension");
  }
  Certificate cert;
  cert.tolerance = tolerance;
  cert.feasible = true;

  std::vector<std::size_t> cat_dims;
  long combos = 1;
  for (std::size_t i = 0; i < d; ++i) {
    if (level_coords[i].empty()) continue;
    cat_dims.push_back(i);
    combos *= static_cast<long>(level_coords[i].size());
    if (combos > kMaxLevelCombinations) {
      throw Error(ErrorCode::capacity, "too many admitted level combinations to verify");
    }
  }
  InnerOptions inner;
  inner.max_iterations = std::max(200, problem.config.inner_max_iters);
  inner.tolerance = std::min(1e-10, problem.config.inner_tolerance);

  const long samples = d == 0 ? 1 : 10L * static_cast<long>(d) * samples_per_dim;
  cert.samples = samples;
  for (const auto& r : problem.responses) {
    ResponseCertificate rc;
    rc.name = r.name();
    rc.accept_lower = r.accept_lower();
    rc.accept_upper = r.accept_upper();
    double min_lower = kInfinity;
    double max_upper = -kInfinity;

    std::vector<double> blo(lo.begin(), lo.end()), bhi(hi.begin(), hi.end());
    for (long comb = 0; comb < combos; ++comb) {
      long rest = comb;
      for (std::size_t cd : cat_dims) {
        const auto& coords = level_coords[cd];
        const auto idx = static_cast<std::size_t>(rest % static_cast<long>(coords.size()));
        rest /= static_cast<long>(coords.size());
        blo[cd] = bhi[cd] = coords[idx];
      }
      min_lower = std::min(min_lower, inner_extreme_ti(r, blo, bhi, Side::lower, TiMode::exact, inner).value);
      max_upper = std::max(max_upper, inner_extreme_ti(r, blo, bhi, Side::upper, TiMode::exact, inner).value);
    }

    Halton halton(std::max(1, static_cast<int>(d)));
    std::vector<double> z(d);
    for (long s = 0; s < samples; ++s) {
      const auto& u = halton.next();
      for (std::size_t i = 0; i < d; ++i) {
        if (level_coords[i].empty()) {
          z[i] = lo[i] + u[i] * (hi[i] - lo[i]);
        } else {
          const auto& coords = level_coords[i];
          const auto idx = std::min(coords.size() - 1, static_cast<std::size_t>(u[i] * static_cast<double>(coords.size())));
          z[i] = coords[idx];
        }
      }
      const auto v = r.evaluate(z, TiMode::exact);
      min_lower = std::min(min_lower, v.lower());
      max_upper = std::max(max_upper, v.upper());
    }
    rc.min_lower = min_lower;
    rc.max_upper = max_upper;
    rc.lower_margin = std::isinf(rc.accept_lower) ? kInfinity : min_lower - rc.accept_lower;
    rc.upper_margin = std::isinf(rc.accept_upper) ? kInfinity : rc.accept_upper - max_upper;
    if (rc.lower_margin < -tolerance || rc.upper_margin < -tolerance) cert.feasible = false;
    cert.responses.push_back(rc);
  }
  return cert;
}

bool describe_box(const DsProblem& problem, const NormalizedProblem& np, std::span<const double> x, DsResult& res) {
  const auto d = static_cast<std::size_t>(np.dims);
  if (x.size() != 2 * d) throw Error(ErrorCode::contract, "candidate must have 2d entries");
  bool levels_ok = true;
  std::vector<std::vector<double>> level_coords(d);
  res.parameters.clear();
  for (std::size_t pi = 0; pi < problem.parameters.size(); ++pi) {
    const auto& par = problem.parameters[pi];
    ParameterRange pr;
    pr.name = par.name;
    pr.kind = par.kind;
    const int dim = np.transform.parameter_dim[pi];
    if (dim < 0) {
      pr.optimized = false;
      pr.levels = par.levels;
      res.parameters.push_back(pr);
      continue;
    }
    const auto di = static_cast<std::size_t>(dim);
    pr.normalized_lower = x[di];
    pr.normalized_upper = x[d + di];
    if (par.categorical()) {
      const auto& rel = *np.transform.relaxations[pi];
      pr.effect_lower = rel.effect(x[di]);
      pr.effect_upper = rel.effect(x[d + di]);
      for (int l : map_levels(rel, pr.effect_lower, pr.effect_upper)) {
        pr.levels.push_back(par.levels[static_cast<std::size_t>(l)]);
        level_coords[di].push_back(rel.coordinate(rel.effects[static_cast<std::size_t>(l)]));
      }
      if (pr.levels.empty()) levels_ok = false;
    } else {
      pr.lower = np.transform.to_raw(dim, x[di]);
      pr.upper = np.transform.to_raw(dim, x[d + di]);
    }
    res.parameters.push_back(pr);
  }
  res.candidate.assign(x.begin(), x.end());
  res.volume = unweighted_volume(x);
  res.weighted_volume = objective(x, np.weights);
  const double tol = res.certificate.tolerance;
  res.certificate = verify_box(np, x.subspan(0, d), x.subspan(d, d), level_coords, tol);
  if (!levels_ok) res.certificate.feasible = false;
  return levels_ok;
}

DsResult compute_design_space(const DsProblem& problem) {
  const NormalizedProblem np = normalize_problem(problem);
  const OptimizerConfig& cfg = np.config;
  const auto d = static_cast<std::size_t>(np.dims);
  std::optional<std::chrono::steady_clock::time_point> deadline;
  if (cfg.timeout_seconds > 0.0) {
    deadline = std::chrono::steady_clock::now() +
               std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                   std::chrono::duration<double>(cfg.timeout_seconds));
  }

  DsResult res;
  res.seed = cfg.seed;
  res.constraint_count = static_cast<int>(constraint_count(np.dims, static_cast<int>(np.responses.size()),
                                                           cfg.corner_constraints && np.dims <= cfg.corner_cap));

  // A setpoint outside the acceptance limits admits no design space.
  for (const auto& r : np.responses) {
    const auto v = r.evaluate(np.setpoint, TiMode::exact);
    const bool low = !std::isinf(r.accept_lower()) && v.lower() < r.accept_lower();
    const bool high = !std::isinf(r.accept_upper()) && v.upper() > r.accept_upper();
    if (low || high) {
      res.status = DsStatus::infeasible;
      res.violated_response = r.name();
      res.message = "setpoint violates the acceptance limits of response '" + r.name() + "' (interval [" +
                    format_number(v.lower()) + ", " + format_number(v.upper()) + "])";
      std::vector<double> x(2 * d);
      for (std::size_t i = 0; i < d; ++i) x[i] = x[d + i] = np.setpoint[i];
      describe_box(problem, np, x, res);
      res.certificate.feasible = false;
      return res;
    }
  }

  std::vector<double> x;
  bool found = false;
  std::string most_violated;
  if (d > 0) {
    // Pass 1 from each start; the largest feasible objective wins (ties keep
    // the earlier start).
    PassOutcome best;
    bool have = false;
    const Rng base(cfg.seed);
    for (int s = 0; s < cfg.starts; ++s) {
      std::vector<double> x0;
      if (s == 0) {
        x0 = initial_candidate(np, cfg.initial_box_halfwidth);
      } else {
        Rng rng = base.split(static_cast<std::uint64_t>(s));
        x0 = perturbed_candidate(np, cfg.initial_box_halfwidth, rng);
      }
      PassConfig pc;
      pc.pass = 1;
      pc.start = s;
      pc.mode = TiMode::approximate;
      pc.method = Pass2Method::cobyla;
      pc.rho_begin = cfg.rho_start_pass1;
      pc.rho_end = cfg.rho_end;
      pc.max_evaluations = cfg.max_iters_pass1;
      pc.deadline = deadline;
      PassOutcome out = run_pass(np, x0, pc);
      res.passes.push_back(out.trace);
      bool better = !have;
      if (have) {
        if (out.feasible != best.feasible) {
          better = out.feasible;
        } else if (out.feasible) {
          better = out.trace.weighted_volume > best.trace.weighted_volume;
        } else {
          better = out.trace.max_violation < best.trace.max_violation;
        }
      }
      if (better) {
        best = std::move(out);
        have = true;
      }
    }
    PassOutcome chosen = best;
    if (cfg.pass2_method != Pass2Method::none) {
      PassConfig pc;
      pc.pass = 2;
      pc.mode = TiMode::exact;
      pc.method = cfg.pass2_method;
      pc.rho_begin = cfg.rho_start_pass2;
      pc.rho_end = cfg.rho_end;
      pc.max_evaluations = cfg.max_iters_pass2;
      pc.deadline = deadline;
      PassOutcome second = run_pass(np, best.x, pc);
      res.passes.push_back(second.trace);
      if (second.feasible) chosen = std::move(second);
    }
    x = chosen.x;
    found = chosen.feasible;
    most_violated = chosen.trace.most_violated;

    // The solver tolerates 1e-8 violations; snap the box so that it holds
    // the setpoint and stays inside the cube.
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = std::clamp(std::min(x[i], np.setpoint[i]), np.lower[i], np.upper[i]);
      x[d + i] = std::clamp(std::max(x[d + i], np.setpoint[i]), np.lower[i], np.upper[i]);
    }
  } else {
    found = true;
  }

  if (!describe_box(problem, np, x, res)) found = false;

  if (!found) {
    res.status = DsStatus::infeasible;
    res.message = "no feasible design space found";
    if (!most_violated.empty()) res.message += "; most violated constraint: " + most_violated;
  } else if (!res.certificate.feasible) {
    res.status = DsStatus::infeasible_at_tolerance;
    std::ostringstream msg;
    msg << "verification found interval boundaries beyond the acceptance limits:";
    for (const auto& rc : res.certificate.responses) {
      if (rc.lower_margin < -res.certificate.tolerance || rc.upper_margin < -res.certificate.tolerance) {
        msg << " " << rc.name << " (lower margin " << format_number(rc.lower_margin) << ", upper margin "
            << format_number(rc.upper_margin) << ")";
      }
    }
    res.message = msg.str();
  } else {
    res.status = DsStatus::feasible;
    res.message = "design space found";
  }
  return res;
}

}  // namespace dspace
