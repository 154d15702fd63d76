#include "dspace/problem.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "dspace/error.hpp"

namespace dspace {

namespace {

[[noreturn]] void spec_error(const std::string& msg) { throw Error(ErrorCode::specification, msg); }

std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(rho_start_pass1 > 0.0) || !(rho_start_pass2 > 0.0) || rho_start_pass2 > rho_start_pass1) {
    spec_error("optimizer requires 0 < rho_start_pass2 <= rho_start_pass1");
  }
  if (!(rho_end > 0.0) || rho_end > rho_start_pass2) {
    spec_error("optimizer requires 0 < rho_end <= rho_start_pass2");
  }
  if (max_iters_pass1 <= 0 || max_iters_pass2 <= 0) spec_error("max_iters must be positive");
  if (corner_cap < 0) spec_error("corner_cap must be non-negative");
  if (inner_max_iters <= 0) spec_error("inner max iterations must be positive");
  if (!(inner_tolerance > 0.0)) spec_error("inner tolerance must be positive");
  if (!(initial_box_halfwidth > 0.0) || initial_box_halfwidth > 1.0) {
    spec_error("initial_box_halfwidth must lie in (0, 1]");
  }
  if (starts < 1) spec_error("starts must be at least 1");
  if (!(timeout_seconds >= 0.0)) spec_error("timeout must be non-negative");
}

int DsProblem::parameter_index(const std::string& name) const {
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    if (parameters[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void DsProblem::validate() const {
  if (parameters.empty()) spec_error("problem has no parameters");
  if (responses.empty()) spec_error("problem has no responses");
  std::set<std::string> names;
  for (const auto& p : parameters) {
    if (p.name.empty()) spec_error("parameter with empty name");
    if (!names.insert(p.name).second) spec_error("duplicate parameter '" + p.name + "'");
    if (!(p.weight > 0.0) || !std::isfinite(p.weight)) {
      spec_error("weight of '" + p.name + "' must be positive and finite");
    }
    if (p.categorical()) {
      if (p.levels.size() < 2) spec_error("categorical parameter '" + p.name + "' needs at least two levels");
      std::set<std::string> lv(p.levels.begin(), p.levels.end());
      if (lv.size() != p.levels.size()) spec_error("duplicate level in '" + p.name + "'");
      if (std::find(p.levels.begin(), p.levels.end(), p.setpoint_level) == p.levels.end()) {
        spec_error("setpoint level '" + p.setpoint_level + "' is not a level of '" + p.name + "'");
      }
    } else {
      if (!std::isfinite(p.lower) || !std::isfinite(p.upper) || !(p.lower < p.upper)) {
        spec_error("parameter '" + p.name + "' needs finite bounds with lower < upper");
      }
      if (!(p.setpoint >= p.lower && p.setpoint <= p.upper)) {
        spec_error("setpoint " + fmt_num(p.setpoint) + " of '" + p.name + "' lies outside [" +
                   fmt_num(p.lower) + ", " + fmt_num(p.upper) + "]");
      }
    }
  }
  std::set<std::string> rnames;
  for (const auto& r : responses) {
    if (!rnames.insert(r.name).second) spec_error("duplicate response '" + r.name + "'");
    r.ti.validate();
    if (std::isnan(r.accept_lower) || std::isnan(r.accept_upper) || !(r.accept_lower < r.accept_upper)) {
      spec_error("response '" + r.name + "' needs accept_lower < accept_upper");
    }
    if (std::isinf(r.accept_lower) && std::isinf(r.accept_upper)) {
      spec_error("response '" + r.name + "' needs at least one finite acceptance limit");
    }
    r.model.validate();
    for (const auto& f : r.model.factors) {
      const int idx = parameter_index(f.name);
      if (idx < 0) spec_error("model '" + r.name + "' uses factor '" + f.name + "' which is not a parameter");
      const auto& p = parameters[static_cast<std::size_t>(idx)];
      if (p.categorical() != f.categorical()) {
        spec_error("factor '" + f.name + "' has a different kind in model '" + r.name + "'");
      }
      if (f.categorical() && f.levels != p.levels) {
        spec_error("levels of '" + f.name + "' in model '" + r.name + "' differ from the parameter's");
      }
    }
  }
  config.validate();
}

std::string to_string(DsStatus status) {
  switch (status) {
    case DsStatus::feasible: return "feasible";
    case DsStatus::infeasible_at_tolerance: return "infeasible_at_tolerance";
    case DsStatus::infeasible: return "infeasible";
  }
  return "infeasible";
}

std::string to_string(Pass2Method method) {
  switch (method) {
    case Pass2Method::cobyla: return "cobyla";
    case Pass2Method::slsqp: return "slsqp";
    case Pass2Method::none: return "none";
  }
  return "none";
}

Pass2Method pass2_method_from_string(const std::string& s) {
  if (s == "cobyla") return Pass2Method::cobyla;
  if (s == "slsqp") return Pass2Method::slsqp;
  if (s == "none") return Pass2Method::none;
  throw Error(ErrorCode::parse, "unknown pass-2 method '" + s + "' (expected cobyla, slsqp or none)");
}

}  // namespace dspace
