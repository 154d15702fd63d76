#include "dspace/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

#include "dspace/error.hpp"

namespace dspace {

namespace {

int kind_rank(TermKind kind) {
  switch (kind) {
    case TermKind::intercept: return 0;
    case TermKind::linear: return 1;
    case TermKind::categorical_level: return 2;
    case TermKind::interaction: return 3;
    case TermKind::quadratic: return 4;
  }
  return 5;
}

void require_factor(int f, const std::vector<Factor>& factors) {
  if (f < 0 || f >= static_cast<int>(factors.size())) {
    throw Error(ErrorCode::specification, "term references unknown factor index " + std::to_string(f));
  }
}

}  // namespace

int Factor::level_index(std::string_view label) const {
  const auto it = std::find(levels.begin(), levels.end(), label);
  return it == levels.end() ? -1 : static_cast<int>(it - levels.begin());
}

bool canonical_less(const TermSpec& a, const TermSpec& b) {
  return std::tuple(kind_rank(a.kind), a.factor, a.factor2, a.level) <
         std::tuple(kind_rank(b.kind), b.factor, b.factor2, b.level);
}

std::vector<TermSpec> canonicalize_terms(std::vector<TermSpec> terms,
                                         const std::vector<Factor>& factors) {
  for (auto& t : terms) {
    switch (t.kind) {
      case TermKind::intercept:
        t.factor = t.factor2 = t.level = -1;
        break;
      case TermKind::linear:
        require_factor(t.factor, factors);
        if (factors[t.factor].categorical()) {
          throw Error(ErrorCode::specification,
                      "categorical factor '" + factors[t.factor].name +
                          "' must enter through categorical_level terms");
        }
        t.factor2 = t.level = -1;
        break;
      case TermKind::quadratic:
        require_factor(t.factor, factors);
        if (factors[t.factor].categorical()) {
          throw Error(ErrorCode::specification,
                      "quadratic term on categorical factor '" + factors[t.factor].name + "'");
        }
        t.factor2 = t.level = -1;
        break;
      case TermKind::interaction:
        require_factor(t.factor, factors);
        require_factor(t.factor2, factors);
        if (t.factor == t.factor2) {
          throw Error(ErrorCode::specification,
                      "interaction of factor '" + factors[t.factor].name + "' with itself");
        }
        if (factors[t.factor].categorical() || factors[t.factor2].categorical()) {
          throw Error(ErrorCode::specification,
                      "interactions with categorical factors are not supported");
        }
        if (t.factor > t.factor2) std::swap(t.factor, t.factor2);
        t.level = -1;
        break;
      case TermKind::categorical_level: {
        require_factor(t.factor, factors);
        const auto& f = factors[t.factor];
        const int k = static_cast<int>(f.levels.size());
        if (!f.categorical() || t.level < 0 || t.level > k - 2) {
          throw Error(ErrorCode::specification,
                      "categorical level column " + std::to_string(t.level) + " invalid for factor '" +
                          f.name + "'");
        }
        t.factor2 = -1;
        break;
      }
    }
  }
  std::sort(terms.begin(), terms.end(), canonical_less);
  const auto dup = std::adjacent_find(terms.begin(), terms.end());
  if (dup != terms.end()) {
    throw Error(ErrorCode::specification, "duplicate term " + term_label(*dup, factors));
  }
  // Every used categorical factor carries its complete block of k-1 columns.
  for (int f = 0; f < static_cast<int>(factors.size()); ++f) {
    if (!factors[f].categorical()) continue;
    const auto count = std::count_if(terms.begin(), terms.end(), [f](const TermSpec& t) {
      return t.kind == TermKind::categorical_level && t.factor == f;
    });
    const auto k = static_cast<long>(factors[f].levels.size());
    if (count != 0 && count != k - 1) {
      throw Error(ErrorCode::specification,
                  "categorical factor '" + factors[f].name + "' needs all " + std::to_string(k - 1) +
                      " sum-coded columns");
    }
  }
  return terms;
}

std::string term_label(const TermSpec& term, const std::vector<Factor>& factors) {
  auto name = [&](int f) {
    return f >= 0 && f < static_cast<int>(factors.size()) ? factors[f].name : "#" + std::to_string(f);
  };
  switch (term.kind) {
    case TermKind::intercept: return "(Intercept)";
    case TermKind::linear: return name(term.factor);
    case TermKind::quadratic: return name(term.factor) + "^2";
    case TermKind::interaction: return name(term.factor) + ":" + name(term.factor2);
    case TermKind::categorical_level: {
      const auto& f = factors.at(term.factor);
      return f.name + "[" + f.levels.at(term.level) + "]";
    }
  }
  return "?";
}

std::size_t row_count(const DataTable& data, const std::vector<Factor>& factors) {
  if (data.size() != factors.size()) {
    throw Error(ErrorCode::contract, "data table has " + std::to_string(data.size()) +
                                         " columns, expected " + std::to_string(factors.size()));
  }
  std::size_t rows = 0;
  bool first = true;
  for (std::size_t f = 0; f < factors.size(); ++f) {
    const std::size_t r = factors[f].categorical() ? data[f].labels.size() : data[f].values.size();
    if (first) {
      rows = r;
      first = false;
    } else if (r != rows) {
      throw Error(ErrorCode::contract, "column '" + factors[f].name + "' has " + std::to_string(r) +
                                           " rows, expected " + std::to_string(rows));
    }
  }
  return rows;
}

Eigen::MatrixXd build_design_matrix(const DataTable& data, std::span<const TermSpec> terms,
                                    const std::vector<Factor>& factors) {
  for (std::size_t i = 0; i < terms.size(); ++i) {
    for (std::size_t j = i + 1; j < terms.size(); ++j) {
      if (terms[i] == terms[j]) {
        throw Error(ErrorCode::specification, "duplicate term " + term_label(terms[i], factors));
      }
    }
  }
  const std::size_t rows = row_count(data, factors);

  // Level indices of categorical cells, resolved once per factor.
  std::vector<std::vector<int>> level_idx(factors.size());
  for (std::size_t f = 0; f < factors.size(); ++f) {
    if (!factors[f].categorical()) continue;
    level_idx[f].resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const int idx = factors[f].level_index(data[f].labels[r]);
      if (idx < 0) {
        throw Error(ErrorCode::coding, "unknown level '" + data[f].labels[r] + "' for factor '" +
                                           factors[f].name + "' in row " + std::to_string(r + 1));
      }
      level_idx[f][r] = idx;
    }
  }

  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(terms.size()));
  for (std::size_t c = 0; c < terms.size(); ++c) {
    const auto& t = terms[c];
    if (t.kind != TermKind::intercept) require_factor(t.factor, factors);
    if (t.kind == TermKind::interaction) require_factor(t.factor2, factors);
    for (std::size_t r = 0; r < rows; ++r) {
      double v = 0.0;
      switch (t.kind) {
        case TermKind::intercept: v = 1.0; break;
        case TermKind::linear: v = data[t.factor].values[r]; break;
        case TermKind::quadratic: {
          const double a = data[t.factor].values[r];
          v = a * a;
          break;
        }
        case TermKind::interaction:
          v = data[t.factor].values[r] * data[t.factor2].values[r];
          break;
        case TermKind::categorical_level: {
          const int k = static_cast<int>(factors[t.factor].levels.size());
          v = sum_code(level_idx[t.factor][r], t.level, k);
          break;
        }
      }
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return x;
}

Eigen::VectorXd expand_point(std::span<const double> point, std::span<const TermSpec> terms,
                             const std::vector<Factor>& factors) {
  if (point.size() != factors.size()) {
    throw Error(ErrorCode::contract, "point has " + std::to_string(point.size()) +
                                         " coordinates, expected " + std::to_string(factors.size()));
  }
  Eigen::VectorXd row(static_cast<Eigen::Index>(terms.size()));
  for (std::size_t c = 0; c < terms.size(); ++c) {
    const auto& t = terms[c];
    double v = 0.0;
    switch (t.kind) {
      case TermKind::intercept: v = 1.0; break;
      case TermKind::linear: v = point[t.factor]; break;
      case TermKind::quadratic: v = point[t.factor] * point[t.factor]; break;
      case TermKind::interaction: v = point[t.factor] * point[t.factor2]; break;
      case TermKind::categorical_level: {
        const int k = static_cast<int>(factors[t.factor].levels.size());
        const int level = static_cast<int>(std::lround(point[t.factor]));
        if (level < 0 || level >= k) {
          throw Error(ErrorCode::coding, "level index out of range for factor '" + factors[t.factor].name + "'");
        }
        v = sum_code(level, t.level, k);
        break;
      }
    }
    row(static_cast<Eigen::Index>(c)) = v;
  }
  return row;
}

int RegressionModel::factor_index(std::string_view name) const {
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (factors[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void RegressionModel::validate() const {
  const auto p = static_cast<Eigen::Index>(terms.size());
  if (beta.size() != p) {
    throw Error(ErrorCode::contract, "model has " + std::to_string(p) + " terms but " +
                                         std::to_string(beta.size()) + " coefficients");
  }
  if (xtx_inverse.rows() != p || xtx_inverse.cols() != p) {
    throw Error(ErrorCode::contract, "xtx_inverse must be " + std::to_string(p) + "x" + std::to_string(p));
  }
  if (p_terms != static_cast<int>(p)) {
    throw Error(ErrorCode::contract, "p_terms does not match the term count");
  }
  if (n <= p_terms) {
    throw Error(ErrorCode::contract, "model needs n > p_terms (n=" + std::to_string(n) +
                                         ", p=" + std::to_string(p_terms) + ")");
  }
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
    throw Error(ErrorCode::contract, "sigma2 must be finite and non-negative");
  }
  const double scale = std::max(1.0, xtx_inverse.cwiseAbs().maxCoeff());
  if ((xtx_inverse - xtx_inverse.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw Error(ErrorCode::contract, "xtx_inverse is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(xtx_inverse, Eigen::EigenvaluesOnly);
  if (p > 0 && eig.eigenvalues().minCoeff() <= 0.0) {
    throw Error(ErrorCode::contract, "xtx_inverse is not positive definite");
  }
}

RegressionModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        std::span<const std::string> column_names) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (y.size() != n) {
    throw Error(ErrorCode::contract, "response has " + std::to_string(y.size()) + " rows, X has " +
                                         std::to_string(n));
  }
  if (n <= p) {
    throw Error(ErrorCode::contract, "need more observations than terms (n=" + std::to_string(n) +
                                         ", p=" + std::to_string(p) + ")");
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
  const auto& sv = svd.singularValues();
  const double smax = p > 0 ? sv(0) : 0.0;
  const double smin = p > 0 ? sv(p - 1) : 0.0;
  if (p > 0 && (smin <= 0.0 || smax / smin >= 1e10)) {
    // Name every column that lies in the span of the columns before it.
    std::vector<std::string> collinear;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::VectorXd col = x.col(j);
      double resid = col.norm();
      if (!kept.empty()) {
        Eigen::MatrixXd basis(n, static_cast<Eigen::Index>(kept.size()));
        for (std::size_t k = 0; k < kept.size(); ++k) basis.col(static_cast<Eigen::Index>(k)) = x.col(kept[k]);
        const Eigen::VectorXd coef = basis.colPivHouseholderQr().solve(col);
        resid = (col - basis * coef).norm();
      }
      if (resid <= 1e-10 * std::max(col.norm(), smax)) {
        collinear.push_back(j < static_cast<Eigen::Index>(column_names.size())
                                ? column_names[static_cast<std::size_t>(j)]
                                : "column " + std::to_string(j));
      } else {
        kept.push_back(j);
      }
    }
    std::ostringstream msg;
    msg << "design matrix is rank deficient (condition number "
        << (smin > 0.0 ? smax / smin : INFINITY) << ")";
    if (!collinear.empty()) {
      msg << "; collinear columns:";
      for (const auto& c : collinear) msg << " " << c;
    }
    throw Error(ErrorCode::singular_fit, msg.str());
  }

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));

  RegressionModel model;
  model.beta = qr.solve(y);
  const Eigen::VectorXd resid = y - x * model.beta;
  model.n = static_cast<int>(n);
  model.p_terms = static_cast<int>(p);
  model.sigma2 = resid.squaredNorm() / static_cast<double>(n - p);
  Eigen::MatrixXd v = r_inv * r_inv.transpose();
  model.xtx_inverse = 0.5 * (v + v.transpose());
  return model;
}

RegressionModel fit_model(std::vector<Factor> factors, std::vector<TermSpec> terms,
                          const DataTable& data, const Eigen::VectorXd& y, std::string response) {
  terms = canonicalize_terms(std::move(terms), factors);
  const Eigen::MatrixXd x = build_design_matrix(data, terms, factors);
  std::vector<std::string> names;
  names.reserve(terms.size());
  for (const auto& t : terms) names.push_back(term_label(t, factors));
  RegressionModel model = fit_ols(x, y, names);
  model.response = std::move(response);
  model.factors = std::move(factors);
  model.terms = std::move(terms);
  return model;
}

RegressionModel make_prefitted(std::vector<Factor> factors, std::vector<TermSpec> terms,
                               Eigen::VectorXd beta, double sigma2, int n,
                               Eigen::MatrixXd xtx_inverse, std::string response) {
  // Keep coefficients aligned with the canonical term order.
  std::vector<std::size_t> order(terms.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    TermSpec ta = terms[a], tb = terms[b];
    if (ta.kind == TermKind::interaction && ta.factor > ta.factor2) std::swap(ta.factor, ta.factor2);
    if (tb.kind == TermKind::interaction && tb.factor > tb.factor2) std::swap(tb.factor, tb.factor2);
    return canonical_less(ta, tb);
  });
  const auto p = static_cast<Eigen::Index>(terms.size());
  if (beta.size() != p || xtx_inverse.rows() != p || xtx_inverse.cols() != p) {
    throw Error(ErrorCode::contract, "coefficient / xtx_inverse sizes do not match the term count");
  }
  Eigen::VectorXd b(p);
  Eigen::MatrixXd v(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    b(i) = beta(static_cast<Eigen::Index>(order[i]));
    for (Eigen::Index j = 0; j < p; ++j) {
      v(i, j) = xtx_inverse(static_cast<Eigen::Index>(order[i]), static_cast<Eigen::Index>(order[j]));
    }
  }

  RegressionModel model;
  model.response = std::move(response);
  model.terms = canonicalize_terms(std::move(terms), factors);
  model.factors = std::move(factors);
  model.beta = std::move(b);
  model.sigma2 = sigma2;
  model.n = n;
  model.p_terms = static_cast<int>(p);
  model.xtx_inverse = std::move(v);
  model.validate();
  return model;
}

Prediction predict(const RegressionModel& model, const Eigen::Ref<const Eigen::VectorXd>& row) {
  if (row.size() != model.beta.size()) {
    throw Error(ErrorCode::contract, "term row has " + std::to_string(row.size()) + " entries, model has " +
                                         std::to_string(model.beta.size()) + " terms");
  }
  Prediction out;
  out.mean = row.dot(model.beta);
  out.se = std::sqrt(std::max(0.0, model.sigma2 * leverage(model, row)));
  return out;
}

double leverage(const RegressionModel& model, const Eigen::Ref<const Eigen::VectorXd>& row) {
  if (row.size() != model.xtx_inverse.rows()) {
    throw Error(ErrorCode::contract, "term row does not match xtx_inverse");
  }
  return row.dot(model.xtx_inverse * row);
}

double implied_last_level(std::span<const double> fitted) {
  double sum = 0.0;
  for (double b : fitted) sum += b;
  return -sum;
}

CategoricalCoding categorical_coding(const RegressionModel& model, int factor) {
  const auto& f = model.factors.at(static_cast<std::size_t>(factor));
  if (!f.categorical()) {
    throw Error(ErrorCode::contract, "factor '" + f.name + "' is not categorical");
  }
  const int k = static_cast<int>(f.levels.size());
  std::vector<double> fitted(static_cast<std::size_t>(k - 1), 0.0);
  for (std::size_t c = 0; c < model.terms.size(); ++c) {
    const auto& t = model.terms[c];
    if (t.kind == TermKind::categorical_level && t.factor == factor) {
      fitted[static_cast<std::size_t>(t.level)] = model.beta(static_cast<Eigen::Index>(c));
    }
  }
  CategoricalCoding coding;
  coding.factor = f.name;
  coding.levels = f.levels;
  coding.level_coefficients = fitted;
  coding.level_coefficients.push_back(implied_last_level(fitted));
  return coding;
}

}  // namespace dspace
