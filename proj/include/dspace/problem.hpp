#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dspace/model.hpp"
#include "dspace/tolerance.hpp"

namespace dspace {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class ParameterKind { continuous, categorical };

struct ParameterDef {
  std::string name;
  ParameterKind kind = ParameterKind::continuous;
  double lower = -1.0;  // screening bounds, raw units
  double upper = 1.0;
  double setpoint = 0.0;
  std::string setpoint_level;  // categorical only
  double weight = 1.0;
  std::vector<std::string> levels;  // categorical only

  bool categorical() const { return kind == ParameterKind::categorical; }
};

struct ResponseDef {
  std::string name;
  RegressionModel model;  // raw parameter units
  TiSpec ti;
  double accept_lower = -kInfinity;
  double accept_upper = kInfinity;
};

enum class Pass2Method { cobyla, slsqp, none };

struct OptimizerConfig {
  double rho_start_pass1 = 0.01;
  double rho_start_pass2 = 0.001;
  double rho_end = 1e-6;
  Pass2Method pass2_method = Pass2Method::cobyla;
  int max_iters_pass1 = 4000;  // function evaluations
  int max_iters_pass2 = 600;
  bool corner_constraints = true;
  int corner_cap = 12;  // corners are disabled above this many dimensions
  int inner_max_iters = 60;
  double inner_tolerance = 1e-9;
  std::uint64_t seed = 0;
  double initial_box_halfwidth = 0.05;
  int starts = 1;
  double timeout_seconds = 0.0;  // 0 = no deadline

  void validate() const;
};

struct DsProblem {
  std::vector<ParameterDef> parameters;
  std::vector<ResponseDef> responses;
  OptimizerConfig config;

  int parameter_index(const std::string& name) const;
  // Raises specification errors for violated invariants.
  void validate() const;
};

enum class DsStatus { feasible, infeasible_at_tolerance, infeasible };

struct ParameterRange {
  std::string name;
  ParameterKind kind = ParameterKind::continuous;
  bool optimized = true;  // false for dropped categorical factors
  double lower = 0.0;     // raw units (continuous)
  double upper = 0.0;
  double normalized_lower = 0.0;
  double normalized_upper = 0.0;
  std::vector<std::string> levels;  // admitted levels (categorical)
  double effect_lower = 0.0;        // range on the level-effect scale (categorical)
  double effect_upper = 0.0;
};

struct PassTrace {
  int pass = 1;
  std::string method;
  std::string ti_mode;
  int start = 0;
  int evaluations = 0;
  int constraints = 0;
  bool feasible = false;
  double volume = 0.0;
  double weighted_volume = 0.0;
  double max_violation = 0.0;
  double rho_final = 0.0;
  long extrapolations = 0;
  int inner_fallbacks = 0;
  std::string most_violated;
  std::vector<std::string> warnings;
  std::vector<double> candidate;     // normalized, as returned by the pass
  double exact_max_violation = 0.0;  // of `candidate` under exact intervals
};

struct ResponseCertificate {
  std::string name;
  double accept_lower = -kInfinity;
  double accept_upper = kInfinity;
  double min_lower = 0.0;  // smallest lower interval boundary over the box
  double max_upper = 0.0;  // largest upper interval boundary over the box
  double lower_margin = 0.0;
  double upper_margin = 0.0;
};

struct Certificate {
  double tolerance = 1e-3;
  bool feasible = false;
  long samples = 0;
  std::vector<ResponseCertificate> responses;
};

struct DsResult {
  DsStatus status = DsStatus::infeasible;
  std::string message;
  std::string violated_response;
  std::vector<ParameterRange> parameters;
  std::vector<double> candidate;  // normalized, lower boundaries then upper boundaries
  double volume = 0.0;            // normalized units
  double weighted_volume = 0.0;
  int constraint_count = 0;
  std::uint64_t seed = 0;
  std::vector<PassTrace> passes;
  Certificate certificate;

  bool feasible() const { return status == DsStatus::feasible; }
};

std::string to_string(DsStatus status);
std::string to_string(Pass2Method method);
Pass2Method pass2_method_from_string(const std::string& s);

}  // namespace dspace
