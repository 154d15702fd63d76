#pragma once

// Helpers shared by the test binaries.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "dspace/error.hpp"
#include "dspace/model.hpp"
#include "dspace/problem.hpp"

namespace testing {

using namespace dspace;

inline std::vector<Factor> continuous(int p) {
  std::vector<Factor> f;
  for (int i = 0; i < p; ++i) f.push_back({"x" + std::to_string(i + 1), {}});
  return f;
}

inline DataTable numeric_table(const std::vector<std::vector<double>>& columns) {
  DataTable t(columns.size());
  for (std::size_t i = 0; i < columns.size(); ++i) t[i].values = columns[i];
  return t;
}

// Prefitted model with xtx_inverse taken from the given design points.
inline RegressionModel model_on_design(const std::vector<Factor>& factors, const std::vector<TermSpec>& terms,
                                       const Eigen::VectorXd& beta, double sigma2, const Eigen::MatrixXd& design) {
  DataTable data(factors.size());
  for (std::size_t f = 0; f < factors.size(); ++f) {
    for (Eigen::Index r = 0; r < design.rows(); ++r) data[f].values.push_back(design(r, static_cast<Eigen::Index>(f)));
  }
  const Eigen::MatrixXd x = build_design_matrix(data, terms, factors);
  Eigen::MatrixXd inv = (x.transpose() * x).inverse();
  inv = 0.5 * (inv + inv.transpose()).eval();
  return make_prefitted(factors, terms, beta, sigma2, static_cast<int>(design.rows()), inv);
}

// Full factorial at three levels per factor, used as a training design.
inline Eigen::MatrixXd three_level_design(int p) {
  int rows = 1;
  for (int i = 0; i < p; ++i) rows *= 3;
  Eigen::MatrixXd d(rows, p);
  for (int r = 0; r < rows; ++r) {
    int v = r;
    for (int c = p - 1; c >= 0; --c) {
      d(r, c) = static_cast<double>(v % 3) - 1.0;
      v /= 3;
    }
  }
  return d;
}

inline ParameterDef unit_parameter(const std::string& name, double setpoint = 0.0) {
  ParameterDef p;
  p.name = name;
  p.lower = -1.0;
  p.upper = 1.0;
  p.setpoint = setpoint;
  return p;
}

inline DsProblem single_response(const RegressionModel& model, double lower, double upper,
                                 std::vector<double> setpoint = {}) {
  DsProblem prob;
  for (std::size_t i = 0; i < model.factors.size(); ++i) {
    prob.parameters.push_back(unit_parameter(model.factors[i].name, setpoint.empty() ? 0.0 : setpoint[i]));
  }
  ResponseDef r;
  r.name = model.response;
  r.model = model;
  r.accept_lower = lower;
  r.accept_upper = upper;
  prob.responses.push_back(r);
  return prob;
}

template <class Fn>
ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected an error");
}

template <class Fn>
std::string error_message_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  throw std::runtime_error("expected an error");
}

}  // namespace testing
