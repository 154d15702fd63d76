#include "dspace/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dspace/error.hpp"

namespace dspace {

namespace {

// Leverage floor for models without an intercept evaluated at the origin.
constexpr double kMinLeverage = 1e-300;

}  // namespace

double CategoricalRelaxation::coordinate(double value) const {
  if (range <= 0.0) return 0.0;
  return (value - midpoint) / (0.5 * range);
}

double CategoricalRelaxation::effect(double coord) const { return midpoint + coord * (0.5 * range); }

CategoricalRelaxation relax_categorical(const CategoricalCoding& coding) {
  if (coding.level_coefficients.size() < 2) {
    throw Error(ErrorCode::contract, "categorical factor '" + coding.factor + "' needs at least two levels");
  }
  CategoricalRelaxation out;
  out.effects = coding.level_coefficients;
  out.order.resize(out.effects.size());
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](int a, int b) { return out.effects[a] < out.effects[b]; });
  const double lo = out.effects[out.order.front()];
  const double hi = out.effects[out.order.back()];
  const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
  out.midpoint = 0.5 * (lo + hi);
  out.range = hi - lo;
  if (out.range <= 1e-12 * scale) {
    out.dropped = true;
    out.range = 0.0;
  }
  return out;
}

std::vector<int> map_levels(const CategoricalRelaxation& relaxation, double effect_lower,
                            double effect_upper, double tol) {
  std::vector<int> out;
  for (int l = 0; l < relaxation.levels(); ++l) {
    const double e = relaxation.effects[static_cast<std::size_t>(l)];
    if (relaxation.dropped || (e >= effect_lower - tol && e <= effect_upper + tol)) out.push_back(l);
  }
  return out;
}

void relaxed_code(const CategoricalRelaxation& relaxation, double coordinate, std::span<double> code,
                  std::span<double> slope) {
  const int k = relaxation.levels();
  if (static_cast<int>(code.size()) != k - 1 || static_cast<int>(slope.size()) != k - 1) {
    throw Error(ErrorCode::contract, "relaxed code spans must have k - 1 entries");
  }
  const auto& ord = relaxation.order;
  const auto& eff = relaxation.effects;
  const double e = relaxation.effect(coordinate);
  // Segment [ord[j], ord[j+1]] with distinct endpoint effects containing e;
  // the end segments extend linearly beyond the range.
  int j_first = -1;
  int j_last = -1;
  int j = -1;
  for (int s = 0; s + 1 < k; ++s) {
    if (eff[ord[s + 1]] > eff[ord[s]]) {
      if (j_first < 0) j_first = s;
      j_last = s;
      if (j < 0 && e <= eff[ord[s + 1]]) j = s;
    }
  }
  if (j_first < 0) {
    // All effects equal: the code of the first level in order.
    for (int c = 0; c < k - 1; ++c) {
      code[c] = sum_code(ord[0], c, k);
      slope[c] = 0.0;
    }
    return;
  }
  if (j < 0) j = j_last;
  if (e < eff[ord[j_first]]) j = j_first;
  const int a = ord[j];
  const int b = ord[j + 1];
  const double span = eff[b] - eff[a];
  const double t = (e - eff[a]) / span;
  const double dt = 0.5 * relaxation.range / span;
  for (int c = 0; c < k - 1; ++c) {
    const double ca = sum_code(a, c, k);
    const double cb = sum_code(b, c, k);
    code[c] = ca + t * (cb - ca);
    slope[c] = (cb - ca) * dt;
  }
}

RegressionModel normalize_model(const RegressionModel& model, std::span<const double> centres,
                                std::span<const double> half_ranges) {
  const std::size_t nf = model.factors.size();
  if (centres.size() != nf || half_ranges.size() != nf) {
    throw Error(ErrorCode::contract, "normalize_model needs one centre and half-range per factor");
  }
  // Each raw term expands into normalized monomials; collect the union.
  std::vector<std::vector<std::pair<TermSpec, double>>> expansion(model.terms.size());
  for (std::size_t t = 0; t < model.terms.size(); ++t) {
    const TermSpec& term = model.terms[t];
    auto& ex = expansion[t];
    switch (term.kind) {
      case TermKind::intercept:
      case TermKind::categorical_level:
        ex.push_back({term, 1.0});
        break;
      case TermKind::linear: {
        const double c = centres[term.factor];
        const double h = half_ranges[term.factor];
        if (c != 0.0) ex.push_back({TermSpec::intercept(), c});
        ex.push_back({TermSpec::linear(term.factor), h});
        break;
      }
      case TermKind::quadratic: {
        const double c = centres[term.factor];
        const double h = half_ranges[term.factor];
        if (c != 0.0) {
          ex.push_back({TermSpec::intercept(), c * c});
          ex.push_back({TermSpec::linear(term.factor), 2.0 * c * h});
        }
        ex.push_back({TermSpec::quadratic(term.factor), h * h});
        break;
      }
      case TermKind::interaction: {
        const double c1 = centres[term.factor];
        const double h1 = half_ranges[term.factor];
        const double c2 = centres[term.factor2];
        const double h2 = half_ranges[term.factor2];
        if (c1 != 0.0 && c2 != 0.0) ex.push_back({TermSpec::intercept(), c1 * c2});
        if (c2 != 0.0) ex.push_back({TermSpec::linear(term.factor), h1 * c2});
        if (c1 != 0.0) ex.push_back({TermSpec::linear(term.factor2), c1 * h2});
        ex.push_back({TermSpec::interaction(term.factor, term.factor2), h1 * h2});
        break;
      }
    }
  }
  std::vector<TermSpec> terms;
  for (const auto& ex : expansion) {
    for (const auto& [ts, coef] : ex) {
      if (std::find(terms.begin(), terms.end(), ts) == terms.end()) terms.push_back(ts);
    }
  }
  std::sort(terms.begin(), terms.end(), canonical_less);

  const auto p_raw = static_cast<Eigen::Index>(model.terms.size());
  const auto p_new = static_cast<Eigen::Index>(terms.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p_raw, p_new);
  for (Eigen::Index t = 0; t < p_raw; ++t) {
    for (const auto& [ts, coef] : expansion[static_cast<std::size_t>(t)]) {
      const auto col = std::find(terms.begin(), terms.end(), ts) - terms.begin();
      a(t, col) += coef;
    }
  }

  RegressionModel out;
  out.response = model.response;
  out.factors = model.factors;
  out.terms = std::move(terms);
  out.beta = a.transpose() * model.beta;
  out.sigma2 = model.sigma2;
  out.n = model.n;
  out.p_terms = model.p_terms;
  const Eigen::MatrixXd v = a.transpose() * model.xtx_inverse * a;
  out.xtx_inverse = 0.5 * (v + v.transpose());
  return out;
}

double Transform::to_normalized(int dim, double value) const {
  const Dimension& d = dims.at(static_cast<std::size_t>(dim));
  if (d.categorical) return relaxations[static_cast<std::size_t>(d.parameter)]->coordinate(value);
  return (value - d.centre) / d.half_range;
}

double Transform::to_raw(int dim, double normalized) const {
  const Dimension& d = dims.at(static_cast<std::size_t>(dim));
  if (d.categorical) return relaxations[static_cast<std::size_t>(d.parameter)]->effect(normalized);
  return d.centre + d.half_range * normalized;
}

ResponseSurface::ResponseSurface(const ResponseDef& def, const DsProblem& problem, const Transform& transform)
    : name_(def.name),
      accept_lower_(def.accept_lower),
      accept_upper_(def.accept_upper),
      dims_(static_cast<int>(transform.dims.size())),
      exact_(def.model.residual_df(), def.model.sigma2, def.ti) {
  const auto& raw = def.model;
  const std::size_t nf = raw.factors.size();
  std::vector<double> centres(nf, 0.0);
  std::vector<double> halves(nf, 1.0);
  std::vector<int> factor_dim(nf, -1);
  std::vector<int> factor_slot(nf, -1);
  for (std::size_t f = 0; f < nf; ++f) {
    const int pi = problem.parameter_index(raw.factors[f].name);
    const auto& par = problem.parameters[static_cast<std::size_t>(pi)];
    const int dim = transform.parameter_dim[static_cast<std::size_t>(pi)];
    if (par.categorical()) {
      CategoricalSlot slot;
      slot.levels = static_cast<int>(par.levels.size());
      if (dim >= 0) {
        slot.dim = dim;
        slot.relaxation = transform.relaxations[static_cast<std::size_t>(pi)];
      }
      factor_slot[f] = static_cast<int>(slots_.size());
      slots_.push_back(slot);
    } else {
      centres[f] = 0.5 * (par.lower + par.upper);
      halves[f] = 0.5 * (par.upper - par.lower);
      factor_dim[f] = dim;
    }
  }
  model_ = normalize_model(raw, centres, halves);

  int offset = 0;
  for (auto& slot : slots_) {
    slot_offset_.push_back(offset);
    offset += slot.levels - 1;
    if (slot.dim < 0) combinations_ *= slot.levels;
  }
  if (combinations_ > 4096) {
    throw Error(ErrorCode::capacity, "response '" + name_ + "' enumerates more than 4096 level combinations");
  }
  std::vector<int> active;
  for (const auto& t : model_.terms) {
    CompiledTerm ct;
    ct.kind = t.kind;
    switch (t.kind) {
      case TermKind::intercept: break;
      case TermKind::linear:
      case TermKind::quadratic:
        ct.d1 = factor_dim[static_cast<std::size_t>(t.factor)];
        active.push_back(ct.d1);
        break;
      case TermKind::interaction:
        ct.d1 = factor_dim[static_cast<std::size_t>(t.factor)];
        ct.d2 = factor_dim[static_cast<std::size_t>(t.factor2)];
        active.push_back(ct.d1);
        active.push_back(ct.d2);
        break;
      case TermKind::categorical_level:
        ct.slot = factor_slot[static_cast<std::size_t>(t.factor)];
        ct.column = t.level;
        if (slots_[static_cast<std::size_t>(ct.slot)].dim >= 0) {
          active.push_back(slots_[static_cast<std::size_t>(ct.slot)].dim);
        }
        break;
    }
    terms_.push_back(ct);
  }
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());
  active_dims_ = std::move(active);

  std::vector<double> z(static_cast<std::size_t>(dims_), 0.0);
  if (active_dims_.empty()) {
    const Value v = evaluate(z, TiMode::exact);
    const double m[1] = {v.mean};
    const double w[1] = {v.half_width};
    approx_ = fit_width_polynomial(m, w);
  } else {
    const CcdPlan ccd = generate_ccd(static_cast<int>(active_dims_.size()));
    approx_ = build_ti_approximation(ccd, [&](std::span<const double> pt) {
      std::fill(z.begin(), z.end(), 0.0);
      for (std::size_t j = 0; j < active_dims_.size(); ++j) z[static_cast<std::size_t>(active_dims_[j])] = pt[j];
      const Value v = evaluate(z, TiMode::exact);
      return std::pair<double, double>{v.mean, v.half_width};
    });
  }
}

void ResponseSurface::fill_codes(std::span<const double> z, int combination, std::vector<double>& codes,
                                 std::vector<double>& slopes) const {
  int rest = combination;
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const auto& slot = slots_[s];
    const auto off = static_cast<std::size_t>(slot_offset_[s]);
    const auto len = static_cast<std::size_t>(slot.levels - 1);
    if (slot.dim >= 0) {
      relaxed_code(*slot.relaxation, z[static_cast<std::size_t>(slot.dim)],
                   std::span<double>(codes).subspan(off, len), std::span<double>(slopes).subspan(off, len));
    } else {
      const int level = rest % slot.levels;
      rest /= slot.levels;
      for (std::size_t c = 0; c < len; ++c) {
        codes[off + c] = sum_code(level, static_cast<int>(c), slot.levels);
        slopes[off + c] = 0.0;
      }
    }
  }
}

void ResponseSurface::term_row(std::span<const double> z, int combination, Eigen::VectorXd& row) const {
  const std::size_t ncode = slot_offset_.empty()
                                ? 0
                                : static_cast<std::size_t>(slot_offset_.back() + slots_.back().levels - 1);
  std::vector<double> codes(ncode), slopes(ncode);
  fill_codes(z, combination, codes, slopes);
  row.resize(static_cast<Eigen::Index>(terms_.size()));
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    const auto& ct = terms_[t];
    double v = 1.0;
    switch (ct.kind) {
      case TermKind::intercept: break;
      case TermKind::linear: v = z[static_cast<std::size_t>(ct.d1)]; break;
      case TermKind::quadratic: {
        const double a = z[static_cast<std::size_t>(ct.d1)];
        v = a * a;
        break;
      }
      case TermKind::interaction:
        v = z[static_cast<std::size_t>(ct.d1)] * z[static_cast<std::size_t>(ct.d2)];
        break;
      case TermKind::categorical_level:
        v = codes[static_cast<std::size_t>(slot_offset_[static_cast<std::size_t>(ct.slot)] + ct.column)];
        break;
    }
    row(static_cast<Eigen::Index>(t)) = v;
  }
}

void ResponseSurface::accumulate_gradient(std::span<const double> z, const std::vector<double>& slopes,
                                          const Eigen::VectorXd& weights, std::span<double> grad) const {
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    const auto& ct = terms_[t];
    const double w = weights(static_cast<Eigen::Index>(t));
    switch (ct.kind) {
      case TermKind::intercept: break;
      case TermKind::linear: grad[static_cast<std::size_t>(ct.d1)] += w; break;
      case TermKind::quadratic:
        grad[static_cast<std::size_t>(ct.d1)] += 2.0 * w * z[static_cast<std::size_t>(ct.d1)];
        break;
      case TermKind::interaction:
        grad[static_cast<std::size_t>(ct.d1)] += w * z[static_cast<std::size_t>(ct.d2)];
        grad[static_cast<std::size_t>(ct.d2)] += w * z[static_cast<std::size_t>(ct.d1)];
        break;
      case TermKind::categorical_level: {
        const auto& slot = slots_[static_cast<std::size_t>(ct.slot)];
        if (slot.dim >= 0) {
          grad[static_cast<std::size_t>(slot.dim)] +=
              w * slopes[static_cast<std::size_t>(slot_offset_[static_cast<std::size_t>(ct.slot)] + ct.column)];
        }
        break;
      }
    }
  }
}

ResponseSurface::Value ResponseSurface::evaluate(std::span<const double> z, TiMode mode,
                                                 std::span<double> grad_mean,
                                                 std::span<double> grad_half_width) const {
  if (static_cast<int>(z.size()) != dims_) {
    throw Error(ErrorCode::contract, "surface point has " + std::to_string(z.size()) + " coordinates, expected " +
                                         std::to_string(dims_));
  }
  const bool want_gm = !grad_mean.empty();
  const bool want_gh = !grad_half_width.empty();
  const std::size_t ncode = slot_offset_.empty()
                                ? 0
                                : static_cast<std::size_t>(slot_offset_.back() + slots_.back().levels - 1);
  std::vector<double> codes(ncode), slopes(ncode);
  Eigen::VectorXd row;
  Value out;

  auto mean_gradient = [&](std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    accumulate_gradient(z, slopes, model_.beta, g);
  };

  if (mode == TiMode::approximate || exact_.sigma2() == 0.0) {
    fill_codes(z, 0, codes, slopes);
    term_row(z, 0, row);
    out.mean = row.dot(model_.beta);
    std::vector<double> gm_local;
    std::span<double> gm = grad_mean;
    if (!want_gm && want_gh && mode == TiMode::approximate) {
      gm_local.assign(static_cast<std::size_t>(dims_), 0.0);
      gm = gm_local;
    }
    if (!gm.empty()) mean_gradient(gm);
    if (mode == TiMode::approximate) {
      out.half_width = approx_.half_width(out.mean);
      if (want_gh) {
        const double s = approx_.half_width_slope(out.mean);
        for (std::size_t j = 0; j < grad_half_width.size(); ++j) grad_half_width[j] = s * gm[j];
      }
    } else {
      out.half_width = 0.0;
      if (want_gh) std::fill(grad_half_width.begin(), grad_half_width.end(), 0.0);
    }
    return out;
  }

  // Exact: worst (largest-leverage) enumerated level combination.
  double best_lev = -1.0;
  int best_comb = 0;
  Eigen::VectorXd best_u;
  for (int comb = 0; comb < combinations_; ++comb) {
    term_row(z, comb, row);
    Eigen::VectorXd u = model_.xtx_inverse * row;
    const double lev = row.dot(u);
    if (lev > best_lev) {
      best_lev = lev;
      best_comb = comb;
      best_u = std::move(u);
      out.mean = row.dot(model_.beta);
    }
  }
  double slope = 0.0;
  out.half_width = exact_.half_width(std::max(best_lev, kMinLeverage), want_gh ? &slope : nullptr);
  if (want_gm || want_gh) fill_codes(z, best_comb, codes, slopes);
  if (want_gm) mean_gradient(grad_mean);
  if (want_gh) {
    std::fill(grad_half_width.begin(), grad_half_width.end(), 0.0);
    accumulate_gradient(z, slopes, best_u, grad_half_width);
    for (double& g : grad_half_width) g *= 2.0 * slope;
  }
  return out;
}

double ResponseSurface::mean(std::span<const double> z) const {
  Eigen::VectorXd row;
  term_row(z, 0, row);
  return row.dot(model_.beta);
}

double ResponseSurface::boundary(std::span<const double> z, Side side, TiMode mode, std::span<double> grad) const {
  if (grad.empty()) {
    const Value v = evaluate(z, mode);
    return side == Side::lower ? v.lower() : v.upper();
  }
  std::vector<double> gh(grad.size());
  const Value v = evaluate(z, mode, grad, gh);
  const double sign = side == Side::lower ? -1.0 : 1.0;
  for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += sign * gh[j];
  return side == Side::lower ? v.lower() : v.upper();
}

NormalizedProblem normalize_problem(const DsProblem& problem) {
  problem.validate();
  NormalizedProblem out;
  out.config = problem.config;
  Transform& tr = out.transform;
  const std::size_t np = problem.parameters.size();
  tr.parameter_dim.assign(np, -1);
  tr.relaxations.assign(np, std::nullopt);
  tr.relaxation_source.assign(np, -1);

  for (std::size_t pi = 0; pi < np; ++pi) {
    const auto& par = problem.parameters[pi];
    if (!par.categorical()) {
      Dimension d;
      d.parameter = static_cast<int>(pi);
      d.centre = 0.5 * (par.lower + par.upper);
      d.half_range = 0.5 * (par.upper - par.lower);
      tr.parameter_dim[pi] = static_cast<int>(tr.dims.size());
      tr.dims.push_back(d);
      out.dim_names.push_back(par.name);
      out.setpoint.push_back((par.setpoint - d.centre) / d.half_range);
      out.weights.push_back(par.weight);
      continue;
    }
    // The first response with distinct level effects defines the relaxation.
    std::optional<CategoricalRelaxation> chosen;
    int source = -1;
    for (std::size_t r = 0; r < problem.responses.size(); ++r) {
      const auto& model = problem.responses[r].model;
      const int f = model.factor_index(par.name);
      if (f < 0) continue;
      CategoricalRelaxation rel = relax_categorical(categorical_coding(model, f));
      if (!chosen) chosen = rel;
      if (!rel.dropped) {
        chosen = std::move(rel);
        source = static_cast<int>(r);
        break;
      }
    }
    if (!chosen) {
      CategoricalCoding none;
      none.factor = par.name;
      none.levels = par.levels;
      none.level_coefficients.assign(par.levels.size(), 0.0);
      chosen = relax_categorical(none);
    }
    tr.relaxations[pi] = std::move(chosen);
    tr.relaxation_source[pi] = source;
    if (source < 0) continue;  // dropped: every level admitted
    Dimension d;
    d.parameter = static_cast<int>(pi);
    d.categorical = true;
    tr.parameter_dim[pi] = static_cast<int>(tr.dims.size());
    tr.dims.push_back(d);
    out.dim_names.push_back(par.name);
    const auto& rel = *tr.relaxations[pi];
    const auto lvl = static_cast<std::size_t>(
        std::find(par.levels.begin(), par.levels.end(), par.setpoint_level) - par.levels.begin());
    out.setpoint.push_back(rel.coordinate(rel.effects[lvl]));
    out.weights.push_back(par.weight);
  }
  out.dims = static_cast<int>(tr.dims.size());
  out.lower.assign(static_cast<std::size_t>(out.dims), -1.0);
  out.upper.assign(static_cast<std::size_t>(out.dims), 1.0);
  for (const auto& r : problem.responses) out.responses.emplace_back(r, problem, tr);
  return out;
}

std::vector<double> denormalize_candidate(const Transform& transform, std::span<const double> x) {
  const std::size_t d = transform.dims.size();
  if (x.size() != 2 * d) throw Error(ErrorCode::contract, "candidate must have 2d entries");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = transform.to_raw(static_cast<int>(i), x[i]);
    out[d + i] = transform.to_raw(static_cast<int>(i), x[d + i]);
  }
  return out;
}

std::vector<double> normalize_candidate(const Transform& transform, std::span<const double> raw) {
  const std::size_t d = transform.dims.size();
  if (raw.size() != 2 * d) throw Error(ErrorCode::contract, "candidate must have 2d entries");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = transform.to_normalized(static_cast<int>(i), raw[i]);
    out[d + i] = transform.to_normalized(static_cast<int>(i), raw[d + i]);
  }
  return out;
}

}  // namespace dspace
