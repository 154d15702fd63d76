#include "dspace/json_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "dspace/error.hpp"

namespace dspace {

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::parse, what); }

const Json& require(const Json& doc, const char* key, const std::string& where) {
  if (!doc.is_object()) fail(where + ": expected an object");
  auto it = doc.find(key);
  if (it == doc.end()) fail(where + ": missing \"" + key + "\"");
  return *it;
}

double as_number(const Json& v, const std::string& where) {
  if (!v.is_number()) fail(where + ": expected a number");
  return v.get<double>();
}

int as_int(const Json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where + ": expected an integer");
  return v.get<int>();
}

std::string as_string(const Json& v, const std::string& where) {
  if (!v.is_string()) fail(where + ": expected a string");
  return v.get<std::string>();
}

bool as_bool(const Json& v, const std::string& where) {
  if (!v.is_boolean()) fail(where + ": expected true or false");
  return v.get<bool>();
}

std::vector<std::string> as_strings(const Json& v, const std::string& where) {
  if (!v.is_array()) fail(where + ": expected an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(as_string(e, where));
  return out;
}

std::vector<double> as_numbers(const Json& v, const std::string& where) {
  if (!v.is_array()) fail(where + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(as_number(e, where));
  return out;
}

void check_schema(const Json& doc, const std::string& where) {
  if (!doc.is_object()) fail(where + ": expected an object");
  auto it = doc.find("schema_version");
  if (it == doc.end()) return;  // tolerated on input
  if (!it->is_number_integer() || it->get<int>() != kSchemaVersion) {
    fail(where + ": unsupported schema_version (expected 1)");
  }
}

int factor_by_name(const std::vector<Factor>& factors, const std::string& name, const std::string& where) {
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (factors[i].name == name) return static_cast<int>(i);
  }
  fail(where + ": unknown factor '" + name + "'");
}

Json numbers_or_null(std::span<const double> values) {
  Json arr = Json::array();
  for (double v : values) arr.push_back(limit_to_json(v));
  return arr;
}

Json string_array(const std::vector<std::string>& values) {
  Json arr = Json::array();
  for (const auto& s : values) arr.push_back(s);
  return arr;
}

std::string kind_name(ParameterKind k) { return k == ParameterKind::categorical ? "categorical" : "continuous"; }

ParameterKind kind_from(const std::string& s, const std::string& where) {
  if (s == "continuous") return ParameterKind::continuous;
  if (s == "categorical") return ParameterKind::categorical;
  fail(where + ": kind must be \"continuous\" or \"categorical\"");
}

DsStatus status_from(const std::string& s) {
  if (s == "feasible") return DsStatus::feasible;
  if (s == "infeasible_at_tolerance") return DsStatus::infeasible_at_tolerance;
  if (s == "infeasible") return DsStatus::infeasible;
  fail("result: unknown status '" + s + "'");
}

}  // namespace

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(std::string("malformed JSON: ") + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_json(ss.str());
  } catch (const Error& e) {
    fail(path.string() + ": " + e.what());
  }
}

std::string dump_json(const Json& doc) { return doc.dump(2) + "\n"; }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::parse, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::parse, "failed writing '" + path.string() + "'");
}

Json limit_to_json(double value) {
  if (std::isinf(value) || std::isnan(value)) return nullptr;
  return value;
}

double limit_from_json(const Json& doc, double infinite_value) {
  if (doc.is_null()) return infinite_value;
  return as_number(doc, "limit");
}

Json term_to_json(const TermSpec& term, const std::vector<Factor>& factors) {
  auto name = [&](int f) { return factors.at(static_cast<std::size_t>(f)).name; };
  switch (term.kind) {
    case TermKind::intercept:
      return {{"kind", "intercept"}};
    case TermKind::linear:
      return {{"kind", "linear"}, {"factor", name(term.factor)}};
    case TermKind::quadratic:
      return {{"kind", "quadratic"}, {"factor", name(term.factor)}};
    case TermKind::interaction:
      return {{"kind", "interaction"}, {"factors", {name(term.factor), name(term.factor2)}}};
    case TermKind::categorical_level:
      return {{"kind", "categorical_level"}, {"factor", name(term.factor)}, {"level", term.level}};
  }
  return {};
}

TermSpec term_from_json(const Json& doc, const std::vector<Factor>& factors) {
  if (doc.is_string()) {
    const std::string s = doc.get<std::string>();
    if (s == "1") return TermSpec::intercept();
    if (auto pos = s.find(':'); pos != std::string::npos) {
      return TermSpec::interaction(factor_by_name(factors, s.substr(0, pos), "term"),
                                   factor_by_name(factors, s.substr(pos + 1), "term"));
    }
    if (s.size() > 2 && s.substr(s.size() - 2) == "^2") {
      return TermSpec::quadratic(factor_by_name(factors, s.substr(0, s.size() - 2), "term"));
    }
    if (auto pos = s.find('['); pos != std::string::npos && s.back() == ']') {
      const int f = factor_by_name(factors, s.substr(0, pos), "term");
      try {
        return TermSpec::categorical_level(f, std::stoi(s.substr(pos + 1, s.size() - pos - 2)));
      } catch (const std::exception&) {
        fail("term '" + s + "': bad level index");
      }
    }
    const int f = factor_by_name(factors, s, "term");
    if (factors[static_cast<std::size_t>(f)].categorical()) {
      fail("term '" + s + "': categorical factors need a level index");
    }
    return TermSpec::linear(f);
  }
  const std::string kind = as_string(require(doc, "kind", "term"), "term.kind");
  if (kind == "intercept") return TermSpec::intercept();
  if (kind == "linear" || kind == "quadratic") {
    const int f = factor_by_name(factors, as_string(require(doc, "factor", "term"), "term.factor"), "term");
    return kind == "linear" ? TermSpec::linear(f) : TermSpec::quadratic(f);
  }
  if (kind == "interaction") {
    const auto names = as_strings(require(doc, "factors", "term"), "term.factors");
    if (names.size() != 2) fail("interaction term needs exactly two factors");
    return TermSpec::interaction(factor_by_name(factors, names[0], "term"), factor_by_name(factors, names[1], "term"));
  }
  if (kind == "categorical_level") {
    const int f = factor_by_name(factors, as_string(require(doc, "factor", "term"), "term.factor"), "term");
    return TermSpec::categorical_level(f, as_int(require(doc, "level", "term"), "term.level"));
  }
  fail("unknown term kind '" + kind + "'");
}

Json model_to_json(const RegressionModel& model) {
  Json factors = Json::array();
  for (const auto& f : model.factors) {
    Json jf = {{"name", f.name}};
    if (f.categorical()) jf["levels"] = string_array(f.levels);
    factors.push_back(jf);
  }
  Json terms = Json::array();
  for (const auto& t : model.terms) terms.push_back(term_to_json(t, model.factors));
  Json beta = Json::array();
  for (Eigen::Index i = 0; i < model.beta.size(); ++i) beta.push_back(model.beta(i));
  Json xtx = Json::array();
  for (Eigen::Index r = 0; r < model.xtx_inverse.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < model.xtx_inverse.cols(); ++c) row.push_back(model.xtx_inverse(r, c));
    xtx.push_back(row);
  }
  return {{"schema_version", kSchemaVersion},
          {"response", model.response},
          {"factors", factors},
          {"terms", terms},
          {"coefficients", beta},
          {"sigma2", model.sigma2},
          {"n", model.n},
          {"xtx_inverse", xtx}};
}

RegressionModel model_from_json(const Json& doc) {
  check_schema(doc, "model");
  std::vector<Factor> factors;
  for (const auto& jf : require(doc, "factors", "model")) {
    Factor f;
    f.name = as_string(require(jf, "name", "model.factors"), "factor.name");
    if (auto it = jf.find("levels"); it != jf.end()) f.levels = as_strings(*it, "factor.levels");
    factors.push_back(f);
  }
  std::vector<TermSpec> terms;
  const Json& jt = require(doc, "terms", "model");
  if (!jt.is_array()) fail("model.terms: expected an array");
  for (const auto& t : jt) terms.push_back(term_from_json(t, factors));
  const auto beta = as_numbers(require(doc, "coefficients", "model"), "model.coefficients");
  const auto p = static_cast<Eigen::Index>(beta.size());
  if (beta.size() != terms.size()) fail("model: one coefficient per term required");
  const Json& jx = require(doc, "xtx_inverse", "model");
  if (!jx.is_array()) fail("model.xtx_inverse: expected an array");
  Eigen::MatrixXd xtx(p, p);
  if (jx.size() == static_cast<std::size_t>(p * p) && (jx.empty() || jx[0].is_number())) {
    const auto flat = as_numbers(jx, "model.xtx_inverse");
    for (Eigen::Index r = 0; r < p; ++r)
      for (Eigen::Index c = 0; c < p; ++c) xtx(r, c) = flat[static_cast<std::size_t>(r * p + c)];
  } else {
    if (jx.size() != static_cast<std::size_t>(p)) fail("model.xtx_inverse: expected a p x p matrix");
    for (Eigen::Index r = 0; r < p; ++r) {
      const auto row = as_numbers(jx[static_cast<std::size_t>(r)], "model.xtx_inverse");
      if (row.size() != static_cast<std::size_t>(p)) fail("model.xtx_inverse: expected a p x p matrix");
      for (Eigen::Index c = 0; c < p; ++c) xtx(r, c) = row[static_cast<std::size_t>(c)];
    }
  }
  std::string response = "y";
  if (auto it = doc.find("response"); it != doc.end()) response = as_string(*it, "model.response");
  return make_prefitted(std::move(factors), std::move(terms), Eigen::Map<const Eigen::VectorXd>(beta.data(), p),
                        as_number(require(doc, "sigma2", "model"), "model.sigma2"),
                        as_int(require(doc, "n", "model"), "model.n"), xtx, response);
}

Json ti_approximation_to_json(const TiApproximation& a) {
  return {{"schema_version", kSchemaVersion}, {"c0", a.c0}, {"c1", a.c1}, {"c2", a.c2},
          {"domain_min", a.domain_min}, {"domain_max", a.domain_max}, {"fit_residual_max", a.fit_residual_max}};
}

TiApproximation ti_approximation_from_json(const Json& doc) {
  check_schema(doc, "ti_approximation");
  TiApproximation a;
  a.c0 = as_number(require(doc, "c0", "ti_approximation"), "c0");
  a.c1 = as_number(require(doc, "c1", "ti_approximation"), "c1");
  a.c2 = as_number(require(doc, "c2", "ti_approximation"), "c2");
  a.domain_min = as_number(require(doc, "domain_min", "ti_approximation"), "domain_min");
  a.domain_max = as_number(require(doc, "domain_max", "ti_approximation"), "domain_max");
  a.fit_residual_max = as_number(require(doc, "fit_residual_max", "ti_approximation"), "fit_residual_max");
  return a;
}

Json optimizer_config_to_json(const OptimizerConfig& c) {
  return {{"rho_start_pass1", c.rho_start_pass1},
          {"rho_start_pass2", c.rho_start_pass2},
          {"rho_end", c.rho_end},
          {"pass2_method", to_string(c.pass2_method)},
          {"max_iters_pass1", c.max_iters_pass1},
          {"max_iters_pass2", c.max_iters_pass2},
          {"corner_constraints", c.corner_constraints},
          {"corner_cap", c.corner_cap},
          {"inner_max_iters", c.inner_max_iters},
          {"inner_tolerance", c.inner_tolerance},
          {"seed", c.seed},
          {"initial_box_halfwidth", c.initial_box_halfwidth},
          {"starts", c.starts},
          {"timeout_seconds", c.timeout_seconds}};
}

OptimizerConfig optimizer_config_from_json(const Json& doc, OptimizerConfig c) {
  if (!doc.is_object()) fail("optimizer: expected an object");
  for (const auto& [key, v] : doc.items()) {
    const std::string where = "optimizer." + key;
    if (key == "rho_start_pass1") c.rho_start_pass1 = as_number(v, where);
    else if (key == "rho_start_pass2") c.rho_start_pass2 = as_number(v, where);
    else if (key == "rho_end") c.rho_end = as_number(v, where);
    else if (key == "pass2_method") c.pass2_method = pass2_method_from_string(as_string(v, where));
    else if (key == "max_iters_pass1") c.max_iters_pass1 = as_int(v, where);
    else if (key == "max_iters_pass2") c.max_iters_pass2 = as_int(v, where);
    else if (key == "corner_constraints") c.corner_constraints = as_bool(v, where);
    else if (key == "corner_cap") c.corner_cap = as_int(v, where);
    else if (key == "inner_max_iters") c.inner_max_iters = as_int(v, where);
    else if (key == "inner_tolerance") c.inner_tolerance = as_number(v, where);
    else if (key == "seed") {
      if (!v.is_number_unsigned()) fail(where + ": expected a non-negative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "initial_box_halfwidth") c.initial_box_halfwidth = as_number(v, where);
    else if (key == "starts") c.starts = as_int(v, where);
    else if (key == "timeout_seconds") c.timeout_seconds = as_number(v, where);
    else fail("optimizer: unknown key '" + key + "'");
  }
  return c;
}

Json problem_to_json(const DsProblem& problem) {
  Json params = Json::array();
  for (const auto& p : problem.parameters) {
    Json jp = {{"name", p.name}, {"kind", kind_name(p.kind)}, {"weight", p.weight}};
    if (p.categorical()) {
      jp["levels"] = string_array(p.levels);
      jp["setpoint"] = p.setpoint_level;
    } else {
      jp["lower"] = p.lower;
      jp["upper"] = p.upper;
      jp["setpoint"] = p.setpoint;
    }
    params.push_back(jp);
  }
  Json responses = Json::array();
  for (const auto& r : problem.responses) {
    Json model = model_to_json(r.model);
    model.erase("schema_version");
    responses.push_back({{"name", r.name},
                         {"model", model},
                         {"ti", {{"alpha", r.ti.alpha}, {"psi", r.ti.psi}}},
                         {"accept_lower", limit_to_json(r.accept_lower)},
                         {"accept_upper", limit_to_json(r.accept_upper)}});
  }
  return {{"schema_version", kSchemaVersion},
          {"parameters", params},
          {"responses", responses},
          {"optimizer", optimizer_config_to_json(problem.config)}};
}

DsProblem problem_from_json(const Json& doc, const std::filesystem::path& base_dir) {
  check_schema(doc, "problem");
  DsProblem problem;
  const Json& jp = require(doc, "parameters", "problem");
  if (!jp.is_array()) fail("problem.parameters: expected an array");
  for (const auto& e : jp) {
    ParameterDef p;
    p.name = as_string(require(e, "name", "parameter"), "parameter.name");
    const std::string where = "parameter '" + p.name + "'";
    if (auto it = e.find("kind"); it != e.end()) p.kind = kind_from(as_string(*it, where), where);
    if (auto it = e.find("levels"); it != e.end()) {
      p.levels = as_strings(*it, where + ".levels");
      if (e.find("kind") == e.end()) p.kind = ParameterKind::categorical;
    }
    if (auto it = e.find("weight"); it != e.end()) p.weight = as_number(*it, where + ".weight");
    if (p.categorical()) {
      p.setpoint_level = as_string(require(e, "setpoint", where), where + ".setpoint");
    } else {
      p.lower = as_number(require(e, "lower", where), where + ".lower");
      p.upper = as_number(require(e, "upper", where), where + ".upper");
      if (auto it = e.find("setpoint"); it != e.end()) {
        p.setpoint = as_number(*it, where + ".setpoint");
      } else {
        p.setpoint = 0.5 * (p.lower + p.upper);
      }
    }
    problem.parameters.push_back(p);
  }
  const Json& jr = require(doc, "responses", "problem");
  if (!jr.is_array()) fail("problem.responses: expected an array");
  for (const auto& e : jr) {
    ResponseDef r;
    r.name = as_string(require(e, "name", "response"), "response.name");
    const std::string where = "response '" + r.name + "'";
    if (auto it = e.find("model"); it != e.end()) {
      r.model = model_from_json(*it);
    } else if (auto mf = e.find("model_file"); mf != e.end()) {
      std::filesystem::path path = as_string(*mf, where + ".model_file");
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      r.model = model_from_json(read_json_file(path));
    } else {
      fail(where + ": needs \"model\" or \"model_file\"");
    }
    if (auto it = e.find("ti"); it != e.end()) {
      if (auto a = it->find("alpha"); a != it->end()) r.ti.alpha = as_number(*a, where + ".ti.alpha");
      if (auto s = it->find("psi"); s != it->end()) r.ti.psi = as_number(*s, where + ".ti.psi");
    }
    if (auto it = e.find("accept_lower"); it != e.end()) r.accept_lower = limit_from_json(*it, -kInfinity);
    if (auto it = e.find("accept_upper"); it != e.end()) r.accept_upper = limit_from_json(*it, kInfinity);
    problem.responses.push_back(std::move(r));
  }
  if (auto it = doc.find("optimizer"); it != doc.end()) problem.config = optimizer_config_from_json(*it);
  return problem;
}

namespace {

Json trace_to_json(const PassTrace& t) {
  return {{"pass", t.pass},
          {"method", t.method},
          {"ti_mode", t.ti_mode},
          {"start", t.start},
          {"evaluations", t.evaluations},
          {"constraints", t.constraints},
          {"feasible", t.feasible},
          {"volume", t.volume},
          {"weighted_volume", t.weighted_volume},
          {"max_violation", t.max_violation},
          {"exact_max_violation", t.exact_max_violation},
          {"rho_final", t.rho_final},
          {"extrapolations", t.extrapolations},
          {"inner_fallbacks", t.inner_fallbacks},
          {"most_violated", t.most_violated},
          {"warnings", string_array(t.warnings)},
          {"candidate", numbers_or_null(t.candidate)}};
}

PassTrace trace_from_json(const Json& e) {
  const std::string w = "result.passes";
  PassTrace t;
  t.pass = as_int(require(e, "pass", w), w);
  t.method = as_string(require(e, "method", w), w);
  t.ti_mode = as_string(require(e, "ti_mode", w), w);
  t.start = as_int(require(e, "start", w), w);
  t.evaluations = as_int(require(e, "evaluations", w), w);
  t.constraints = as_int(require(e, "constraints", w), w);
  t.feasible = as_bool(require(e, "feasible", w), w);
  t.volume = as_number(require(e, "volume", w), w);
  t.weighted_volume = as_number(require(e, "weighted_volume", w), w);
  t.max_violation = as_number(require(e, "max_violation", w), w);
  t.exact_max_violation = as_number(require(e, "exact_max_violation", w), w);
  t.rho_final = as_number(require(e, "rho_final", w), w);
  t.extrapolations = require(e, "extrapolations", w).get<long>();
  t.inner_fallbacks = as_int(require(e, "inner_fallbacks", w), w);
  t.most_violated = as_string(require(e, "most_violated", w), w);
  t.warnings = as_strings(require(e, "warnings", w), w);
  t.candidate = as_numbers(require(e, "candidate", w), w);
  return t;
}

}  // namespace

Json result_to_json(const DsResult& r) {
  Json params = Json::array();
  for (const auto& p : r.parameters) {
    Json jp = {{"name", p.name}, {"kind", kind_name(p.kind)}, {"optimized", p.optimized}};
    if (p.kind == ParameterKind::categorical) {
      jp["levels"] = string_array(p.levels);
      jp["effect_lower"] = p.effect_lower;
      jp["effect_upper"] = p.effect_upper;
    } else {
      jp["lower"] = p.lower;
      jp["upper"] = p.upper;
    }
    jp["normalized_lower"] = p.normalized_lower;
    jp["normalized_upper"] = p.normalized_upper;
    params.push_back(jp);
  }
  Json passes = Json::array();
  for (const auto& t : r.passes) passes.push_back(trace_to_json(t));
  Json certs = Json::array();
  for (const auto& c : r.certificate.responses) {
    certs.push_back({{"name", c.name},
                     {"accept_lower", limit_to_json(c.accept_lower)},
                     {"accept_upper", limit_to_json(c.accept_upper)},
                     {"min_lower", c.min_lower},
                     {"max_upper", c.max_upper},
                     {"lower_margin", limit_to_json(c.lower_margin)},
                     {"upper_margin", limit_to_json(c.upper_margin)}});
  }
  return {{"schema_version", kSchemaVersion},
          {"status", to_string(r.status)},
          {"message", r.message},
          {"violated_response", r.violated_response},
          {"parameters", params},
          {"candidate", r.candidate},
          {"volume", r.volume},
          {"weighted_volume", r.weighted_volume},
          {"constraint_count", r.constraint_count},
          {"seed", r.seed},
          {"passes", passes},
          {"certificate",
           {{"feasible", r.certificate.feasible},
            {"tolerance", r.certificate.tolerance},
            {"samples", r.certificate.samples},
            {"responses", certs}}}};
}

DsResult result_from_json(const Json& doc) {
  check_schema(doc, "result");
  const std::string w = "result";
  DsResult r;
  r.status = status_from(as_string(require(doc, "status", w), w));
  r.message = as_string(require(doc, "message", w), w);
  r.violated_response = as_string(require(doc, "violated_response", w), w);
  for (const auto& e : require(doc, "parameters", w)) {
    ParameterRange p;
    p.name = as_string(require(e, "name", w), w);
    p.kind = kind_from(as_string(require(e, "kind", w), w), w);
    p.optimized = as_bool(require(e, "optimized", w), w);
    if (p.kind == ParameterKind::categorical) {
      p.levels = as_strings(require(e, "levels", w), w);
      p.effect_lower = as_number(require(e, "effect_lower", w), w);
      p.effect_upper = as_number(require(e, "effect_upper", w), w);
    } else {
      p.lower = as_number(require(e, "lower", w), w);
      p.upper = as_number(require(e, "upper", w), w);
    }
    p.normalized_lower = as_number(require(e, "normalized_lower", w), w);
    p.normalized_upper = as_number(require(e, "normalized_upper", w), w);
    r.parameters.push_back(p);
  }
  r.candidate = as_numbers(require(doc, "candidate", w), w);
  r.volume = as_number(require(doc, "volume", w), w);
  r.weighted_volume = as_number(require(doc, "weighted_volume", w), w);
  r.constraint_count = as_int(require(doc, "constraint_count", w), w);
  r.seed = require(doc, "seed", w).get<std::uint64_t>();
  for (const auto& e : require(doc, "passes", w)) r.passes.push_back(trace_from_json(e));
  const Json& jc = require(doc, "certificate", w);
  r.certificate.feasible = as_bool(require(jc, "feasible", w), w);
  r.certificate.tolerance = as_number(require(jc, "tolerance", w), w);
  r.certificate.samples = require(jc, "samples", w).get<long>();
  for (const auto& e : require(jc, "responses", w)) {
    ResponseCertificate c;
    c.name = as_string(require(e, "name", w), w);
    c.accept_lower = limit_from_json(require(e, "accept_lower", w), -kInfinity);
    c.accept_upper = limit_from_json(require(e, "accept_upper", w), kInfinity);
    c.min_lower = as_number(require(e, "min_lower", w), w);
    c.max_upper = as_number(require(e, "max_upper", w), w);
    c.lower_margin = limit_from_json(require(e, "lower_margin", w), kInfinity);
    c.upper_margin = limit_from_json(require(e, "upper_margin", w), kInfinity);
    r.certificate.responses.push_back(c);
  }
  return r;
}

}  // namespace dspace
