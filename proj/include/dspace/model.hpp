#pragma once

// Polynomial OLS surrogates: term structure, design matrices, fitting and
// prediction with standard errors. Categorical factors enter through
// sum-coded columns (k levels -> k-1 columns, last level coded -1).

#include <Eigen/Dense>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dspace {

enum class TermKind { intercept, linear, categorical_level, interaction, quadratic };

struct TermSpec {
  TermKind kind = TermKind::intercept;
  int factor = -1;   // first (or only) referenced factor
  int factor2 = -1;  // second factor of an interaction
  int level = -1;    // sum-coded column index, 0..k-2

  static TermSpec intercept() { return {}; }
  static TermSpec linear(int f) { return {TermKind::linear, f, -1, -1}; }
  static TermSpec quadratic(int f) { return {TermKind::quadratic, f, -1, -1}; }
  static TermSpec interaction(int f, int g) { return {TermKind::interaction, f, g, -1}; }
  static TermSpec categorical_level(int f, int level) {
    return {TermKind::categorical_level, f, -1, level};
  }

  friend bool operator==(const TermSpec&, const TermSpec&) = default;
};

struct Factor {
  std::string name;
  std::vector<std::string> levels;  // empty for continuous factors

  bool categorical() const { return !levels.empty(); }
  int level_index(std::string_view label) const;
};

// Orders terms as: intercept, linear, categorical blocks, interactions
// (lexicographic), quadratics. Interactions are stored with factor < factor2.
bool canonical_less(const TermSpec& a, const TermSpec& b);

// Validates the structural rules and returns the terms in canonical order.
// Throws specification errors on duplicates, self-interactions, quadratic or
// interaction terms on categorical factors and incomplete categorical blocks.
std::vector<TermSpec> canonicalize_terms(std::vector<TermSpec> terms,
                                         const std::vector<Factor>& factors);

std::string term_label(const TermSpec& term, const std::vector<Factor>& factors);

// Sum coding of level `level` of a k-level factor into column `column`.
inline double sum_code(int level, int column, int k) {
  if (level == k - 1) return -1.0;
  return level == column ? 1.0 : 0.0;
}

// One column per factor. Continuous factors fill `values`, categorical
// factors fill `labels`.
struct DataColumn {
  std::vector<double> values;
  std::vector<std::string> labels;
};
using DataTable = std::vector<DataColumn>;

std::size_t row_count(const DataTable& data, const std::vector<Factor>& factors);

Eigen::MatrixXd build_design_matrix(const DataTable& data, std::span<const TermSpec> terms,
                                    const std::vector<Factor>& factors);

// Term expansion of a single point. For categorical factors the entry of
// `point` holds the level index.
Eigen::VectorXd expand_point(std::span<const double> point, std::span<const TermSpec> terms,
                             const std::vector<Factor>& factors);

struct RegressionModel {
  std::string response = "y";
  std::vector<Factor> factors;
  std::vector<TermSpec> terms;
  Eigen::VectorXd beta;
  double sigma2 = 0.0;
  int n = 0;
  int p_terms = 0;
  Eigen::MatrixXd xtx_inverse;

  int residual_df() const { return n - p_terms; }
  int factor_index(std::string_view name) const;

  // Checks the stored invariants (positive residual df, symmetric positive
  // definite xtx_inverse, sigma2 >= 0, consistent sizes).
  void validate() const;
};

// Plain least squares on a prepared matrix. `column_names` (optional) is used
// to name collinear columns in the singular-fit error.
RegressionModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        std::span<const std::string> column_names = {});

RegressionModel fit_model(std::vector<Factor> factors, std::vector<TermSpec> terms,
                          const DataTable& data, const Eigen::VectorXd& y,
                          std::string response = "y");

// Model supplied by its equation rather than by training data.
RegressionModel make_prefitted(std::vector<Factor> factors, std::vector<TermSpec> terms,
                               Eigen::VectorXd beta, double sigma2, int n,
                               Eigen::MatrixXd xtx_inverse, std::string response = "y");

struct Prediction {
  double mean = 0.0;
  double se = 0.0;
};

Prediction predict(const RegressionModel& model, const Eigen::Ref<const Eigen::VectorXd>& row);

// x' (X'X)^-1 x, the prediction variance in units of sigma2.
double leverage(const RegressionModel& model, const Eigen::Ref<const Eigen::VectorXd>& row);

struct CategoricalCoding {
  std::string factor;
  std::vector<std::string> levels;
  std::vector<double> level_coefficients;  // k values summing to zero
};

double implied_last_level(std::span<const double> fitted);

// All k level effects of a categorical factor; effects of a factor absent
// from the model are zero.
CategoricalCoding categorical_coding(const RegressionModel& model, int factor);

}  // namespace dspace
