#include "dspace/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "dspace/engine.hpp"
#include "dspace/error.hpp"
#include "dspace/normalize.hpp"

namespace dspace {

namespace {

constexpr int kCalibrationPoints = 2000;
constexpr int kMaxAttempts = 20;
constexpr int kHistogramBins = 40;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs `fn` until at least `min_seconds` have passed; mean time per call.
template <class Fn>
double timed_mean(Fn&& fn, double min_seconds) {
  int calls = 0;
  const auto t0 = std::chrono::steady_clock::now();
  double elapsed = 0.0;
  do {
    fn();
    ++calls;
    elapsed = seconds_since(t0);
  } while (elapsed < min_seconds);
  return elapsed / calls;
}

std::vector<Factor> continuous_factors(int p) {
  std::vector<Factor> f;
  for (int i = 0; i < p; ++i) f.push_back({"x" + std::to_string(i + 1), {}});
  return f;
}

std::vector<ParameterDef> unit_parameters(const std::vector<Factor>& factors) {
  std::vector<ParameterDef> out;
  for (const auto& f : factors) {
    ParameterDef d;
    d.name = f.name;
    d.lower = -1.0;
    d.upper = 1.0;
    d.setpoint = 0.0;
    out.push_back(d);
  }
  return out;
}

// Terms and coefficients sorted together into canonical order.
RegressionModel prefitted_from_pairs(std::vector<Factor> factors, std::vector<std::pair<TermSpec, double>> pairs,
                                     const Eigen::MatrixXd& design, double sigma2, const std::string& response) {
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const auto& a, const auto& b) { return canonical_less(a.first, b.first); });
  std::vector<TermSpec> terms;
  Eigen::VectorXd beta(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    terms.push_back(pairs[i].first);
    beta(static_cast<Eigen::Index>(i)) = pairs[i].second;
  }
  DataTable data(factors.size());
  for (std::size_t f = 0; f < factors.size(); ++f) {
    for (Eigen::Index r = 0; r < design.rows(); ++r) data[f].values.push_back(design(r, static_cast<Eigen::Index>(f)));
  }
  const Eigen::MatrixXd x = build_design_matrix(data, terms, factors);
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
  return make_prefitted(std::move(factors), std::move(terms), beta, sigma2, static_cast<int>(design.rows()),
                        0.5 * (xtx_inv + xtx_inv.transpose()), response);
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

Json record_to_json(const StudyRecord& r) {
  Json j = {{"method", r.method},
            {"problem", r.problem},
            {"p", r.p},
            {"iteration", r.iteration},
            {"seconds", r.seconds},
            {"volume", r.volume},
            {"weighted_volume", r.weighted_volume},
            {"feasible", r.feasible},
            {"projected", r.projected},
            {"mean_abs_error", r.mean_abs_error},
            {"max_abs_error", r.max_abs_error},
            {"samples", r.samples}};
  if (!r.names.empty()) {
    j["names"] = r.names;
    j["lower"] = r.lower;
    j["upper"] = r.upper;
  }
  return j;
}

StudyRecord record_from_json(const Json& j) {
  StudyRecord r;
  try {
    r.method = j.at("method").get<std::string>();
    r.problem = j.at("problem").get<std::string>();
    r.p = j.at("p").get<int>();
    r.iteration = j.at("iteration").get<int>();
    r.seconds = j.at("seconds").get<double>();
    r.volume = j.at("volume").get<double>();
    r.weighted_volume = j.at("weighted_volume").get<double>();
    r.feasible = j.at("feasible").get<bool>();
    r.projected = j.at("projected").get<bool>();
    r.mean_abs_error = j.at("mean_abs_error").get<double>();
    r.max_abs_error = j.at("max_abs_error").get<double>();
    r.samples = j.at("samples").get<long>();
    if (j.contains("names")) {
      r.names = j.at("names").get<std::vector<std::string>>();
      r.lower = j.at("lower").get<std::vector<double>>();
      r.upper = j.at("upper").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("report record: ") + e.what());
  }
  return r;
}

StudyRecord record_from_result(const std::string& method, const std::string& problem, int p, double seconds,
                               const DsResult& res) {
  StudyRecord r;
  r.method = method;
  r.problem = problem;
  r.p = p;
  r.seconds = seconds;
  r.volume = res.volume;
  r.weighted_volume = res.weighted_volume;
  r.feasible = res.feasible();
  for (const auto& pr : res.parameters) {
    r.names.push_back(pr.name);
    if (pr.kind == ParameterKind::categorical) {
      r.lower.push_back(pr.effect_lower);
      r.upper.push_back(pr.effect_upper);
    } else {
      r.lower.push_back(pr.lower);
      r.upper.push_back(pr.upper);
    }
  }
  return r;
}

}  // namespace

void RandomModelSpec::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::specification, m); };
  if (p < 1) bad("random model needs p >= 1");
  if (interaction_density < 0.0 || interaction_density > 1.0 || quadratic_density < 0.0 || quadratic_density > 1.0) {
    bad("densities must lie in [0, 1]");
  }
  if (!(main_min >= 0.0 && main_min <= main_max) || !(interaction_min >= 0.0 && interaction_min <= interaction_max) ||
      !(quadratic_min >= 0.0 && quadratic_min <= quadratic_max)) {
    bad("coefficient ranges need 0 <= min <= max");
  }
  if (!(sigma_min >= 0.0 && sigma_min <= sigma_max)) bad("sigma range needs 0 <= min <= max");
  if (n < 0) bad("n must be non-negative");
  if (!(target_feasible > 0.0 && target_feasible < 1.0)) bad("target feasible fraction must lie in (0, 1)");
  TiSpec{alpha, psi}.validate();
}

RandomModel random_model(const RandomModelSpec& spec, Rng& rng) {
  spec.validate();
  auto factors = continuous_factors(spec.p);
  auto signed_uniform = [&](double lo, double hi) { return (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(lo, hi); };
  std::vector<std::pair<TermSpec, double>> pairs{{TermSpec::intercept(), rng.uniform(-1.0, 1.0)}};
  for (int i = 0; i < spec.p; ++i) pairs.emplace_back(TermSpec::linear(i), signed_uniform(spec.main_min, spec.main_max));
  for (int i = 0; i < spec.p; ++i) {
    for (int j = i + 1; j < spec.p; ++j) {
      if (rng.bernoulli(spec.interaction_density)) {
        pairs.emplace_back(TermSpec::interaction(i, j), signed_uniform(spec.interaction_min, spec.interaction_max));
      }
    }
  }
  for (int i = 0; i < spec.p; ++i) {
    if (rng.bernoulli(spec.quadratic_density)) {
      pairs.emplace_back(TermSpec::quadratic(i), signed_uniform(spec.quadratic_min, spec.quadratic_max));
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const auto& a, const auto& b) { return canonical_less(a.first, b.first); });
  std::vector<TermSpec> terms;
  Eigen::VectorXd beta(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    terms.push_back(pairs[i].first);
    beta(static_cast<Eigen::Index>(i)) = pairs[i].second;
  }
  const int pt = static_cast<int>(terms.size());
  const int n = spec.n > 0 ? spec.n : std::max(2 * pt + 5, 20);
  if (n <= pt) throw Error(ErrorCode::specification, "random model needs n > number of terms");

  RandomModel out;
  out.sigma = rng.uniform(spec.sigma_min, spec.sigma_max);
  DataTable data(factors.size());
  for (auto& col : data) col.values.resize(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    for (int f = 0; f < spec.p; ++f) data[static_cast<std::size_t>(f)].values[static_cast<std::size_t>(r)] = rng.uniform(-1.0, 1.0);
  }
  const Eigen::MatrixXd x = build_design_matrix(data, terms, factors);
  Eigen::VectorXd y = x * beta;
  for (Eigen::Index r = 0; r < y.size(); ++r) y(r) += out.sigma * rng.normal();
  out.y_min = y.minCoeff();
  out.y_max = y.maxCoeff();
  out.model = fit_model(std::move(factors), std::move(terms), data, y, "y");
  return out;
}

GeneratedProblem generate_random_problem(const RandomModelSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng = root.split(static_cast<std::uint64_t>(attempt));
    RandomModel rm = random_model(spec, rng);
    const RegressionModel& m = rm.model;
    const TiSpec ti{spec.alpha, spec.psi};
    const ExactTi exact(m, ti);

    std::vector<double> mean(kCalibrationPoints), hw(kCalibrationPoints);
    std::vector<double> z(static_cast<std::size_t>(spec.p));
    for (int i = 0; i < kCalibrationPoints; ++i) {
      for (auto& v : z) v = rng.uniform(-1.0, 1.0);
      const Eigen::VectorXd row = expand_point(z, m.terms, m.factors);
      mean[static_cast<std::size_t>(i)] = predict(m, row).mean;
      hw[static_cast<std::size_t>(i)] = exact.half_width(leverage(m, row));
    }
    std::vector<double> sorted = mean;
    std::nth_element(sorted.begin(), sorted.begin() + kCalibrationPoints / 2, sorted.end());
    const double median = sorted[kCalibrationPoints / 2];
    // Band half-width each point needs, and the one the target fraction needs.
    std::vector<double> need(kCalibrationPoints);
    for (std::size_t i = 0; i < need.size(); ++i) {
      need[i] = std::max(median - (mean[i] - hw[i]), (mean[i] + hw[i]) - median);
    }
    std::vector<double> need_sorted = need;
    std::sort(need_sorted.begin(), need_sorted.end());
    const auto k = static_cast<std::size_t>(std::ceil(spec.target_feasible * kCalibrationPoints)) - 1;
    const double h = need_sorted[std::min(k, need_sorted.size() - 1)];

    const std::vector<double> centre(static_cast<std::size_t>(spec.p), 0.0);
    const Eigen::VectorXd crow = expand_point(centre, m.terms, m.factors);
    const double cmean = predict(m, crow).mean;
    const double chw = exact.half_width(leverage(m, crow));
    if (std::max(median - (cmean - chw), (cmean + chw) - median) > h) continue;

    GeneratedProblem out;
    out.attempts = attempt + 1;
    out.calibrated_fraction =
        static_cast<double>(std::count_if(need.begin(), need.end(), [&](double v) { return v <= h; })) / kCalibrationPoints;
    out.problem.parameters = unit_parameters(m.factors);
    ResponseDef r;
    r.name = "y";
    r.model = m;
    r.ti = ti;
    r.accept_lower = median - h;
    r.accept_upper = median + h;
    out.problem.responses.push_back(std::move(r));
    out.problem.config.seed = spec.seed;
    return out;
  }
  throw Error(ErrorCode::infeasible, "no random problem with a feasible setpoint after 20 attempts");
}

double feasible_fraction(const DsProblem& problem, int points, std::uint64_t seed) {
  const NormalizedProblem np = normalize_problem(problem);
  Rng rng(seed);
  std::vector<double> z(static_cast<std::size_t>(np.dims));
  long ok = 0;
  for (int i = 0; i < points; ++i) {
    for (auto& v : z) v = rng.uniform(-1.0, 1.0);
    bool feasible = true;
    for (const auto& r : np.responses) {
      const auto v = r.evaluate(z, TiMode::exact);
      if ((!std::isinf(r.accept_lower()) && v.lower() < r.accept_lower()) ||
          (!std::isinf(r.accept_upper()) && v.upper() > r.accept_upper())) {
        feasible = false;
        break;
      }
    }
    ok += feasible ? 1 : 0;
  }
  return points > 0 ? static_cast<double>(ok) / points : 0.0;
}

void Histogram::add(double value) {
  if (counts.empty()) counts.assign(kHistogramBins, 0);
  if (value < lower) {
    ++underflow;
  } else if (value >= upper) {
    ++overflow;
  } else {
    const auto bins = static_cast<double>(counts.size());
    const auto b = std::min(counts.size() - 1, static_cast<std::size_t>((value - lower) / (upper - lower) * bins));
    ++counts[b];
  }
}

long Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), 0L) + underflow + overflow; }

std::vector<StudyAggregate> aggregate_records(const std::vector<StudyRecord>& records, const std::string& metric) {
  auto value = [&](const StudyRecord& r) {
    if (metric == "seconds") return r.seconds;
    if (metric == "volume") return r.volume;
    if (metric == "weighted_volume") return r.weighted_volume;
    if (metric == "mean_abs_error") return r.mean_abs_error;
    throw Error(ErrorCode::contract, "unknown aggregate metric '" + metric + "'");
  };
  std::vector<StudyAggregate> out;
  std::vector<std::vector<double>> values;
  for (const auto& r : records) {
    std::size_t g = 0;
    for (; g < out.size(); ++g) {
      if (out[g].method == r.method && out[g].p == r.p) break;
    }
    if (g == out.size()) {
      StudyAggregate a;
      a.method = r.method;
      a.p = r.p;
      a.metric = metric;
      out.push_back(a);
      values.emplace_back();
    }
    values[g].push_back(value(r));
    out[g].projected = out[g].projected || r.projected;
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    const auto& v = values[g];
    out[g].count = static_cast<long>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    out[g].mean = mean;
    out[g].sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  }
  return out;
}

Json report_to_json(const StudyReport& report) {
  Json records = Json::array();
  for (const auto& r : report.records) records.push_back(record_to_json(r));
  Json aggregates = Json::array();
  for (const auto& a : report.aggregates) {
    aggregates.push_back({{"method", a.method},
                          {"p", a.p},
                          {"metric", a.metric},
                          {"count", a.count},
                          {"mean", a.mean},
                          {"sd", a.sd},
                          {"projected", a.projected}});
  }
  Json doc = {{"schema_version", kSchemaVersion},
              {"study", report.study},
              {"seed", report.seed},
              {"settings", report.settings},
              {"records", records},
              {"aggregates", aggregates}};
  if (report.study == "ti-accuracy") doc["mean_abs_error"] = report.mean_abs_error;
  if (report.histogram) {
    doc["histogram"] = {{"lower", report.histogram->lower},
                        {"upper", report.histogram->upper},
                        {"counts", report.histogram->counts},
                        {"underflow", report.histogram->underflow},
                        {"overflow", report.histogram->overflow}};
  }
  return doc;
}

StudyReport report_from_json(const Json& doc) {
  StudyReport r;
  try {
    if (doc.at("schema_version").get<int>() != kSchemaVersion) {
      throw Error(ErrorCode::parse, "report: unsupported schema_version");
    }
    r.study = doc.at("study").get<std::string>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.settings = doc.at("settings");
    for (const auto& e : doc.at("records")) r.records.push_back(record_from_json(e));
    for (const auto& e : doc.at("aggregates")) {
      StudyAggregate a;
      a.method = e.at("method").get<std::string>();
      a.p = e.at("p").get<int>();
      a.metric = e.at("metric").get<std::string>();
      a.count = e.at("count").get<long>();
      a.mean = e.at("mean").get<double>();
      a.sd = e.at("sd").get<double>();
      a.projected = e.at("projected").get<bool>();
      r.aggregates.push_back(a);
    }
    if (doc.contains("mean_abs_error")) r.mean_abs_error = doc.at("mean_abs_error").get<double>();
    if (doc.contains("histogram")) {
      const Json& h = doc.at("histogram");
      Histogram hist;
      hist.lower = h.at("lower").get<double>();
      hist.upper = h.at("upper").get<double>();
      hist.counts = h.at("counts").get<std::vector<long>>();
      hist.underflow = h.at("underflow").get<long>();
      hist.overflow = h.at("overflow").get<long>();
      r.histogram = hist;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("report: ") + e.what());
  }
  return r;
}

std::string report_to_csv(const StudyReport& report) {
  std::ostringstream os;
  os << "method,problem,p,iteration,seconds,volume,weighted_volume,feasible,projected,mean_abs_error,max_abs_error,"
        "samples\n";
  for (const auto& r : report.records) {
    os << r.method << ',' << r.problem << ',' << r.p << ',' << r.iteration << ',' << format_double(r.seconds) << ','
       << format_double(r.volume) << ',' << format_double(r.weighted_volume) << ',' << (r.feasible ? 1 : 0) << ','
       << (r.projected ? 1 : 0) << ',' << format_double(r.mean_abs_error) << ',' << format_double(r.max_abs_error)
       << ',' << r.samples << '\n';
  }
  return os.str();
}

Json report_plot_data(const StudyReport& report) {
  Json series = Json::array();
  std::vector<std::string> methods;
  for (const auto& a : report.aggregates) {
    if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) methods.push_back(a.method);
  }
  for (const auto& m : methods) {
    Json points = Json::array();
    for (const auto& a : report.aggregates) {
      if (a.method == m) points.push_back({{"p", a.p}, {"mean", a.mean}, {"sd", a.sd}, {"projected", a.projected}});
    }
    series.push_back({{"method", m}, {"points", points}});
  }
  Json doc = {{"schema_version", kSchemaVersion}, {"study", report.study}, {"series", series}};
  if (report.histogram) {
    Json edges = Json::array();
    const auto bins = report.histogram->counts.size();
    for (std::size_t b = 0; b <= bins; ++b) {
      edges.push_back(report.histogram->lower +
                      (report.histogram->upper - report.histogram->lower) * static_cast<double>(b) /
                          static_cast<double>(bins));
    }
    doc["histogram"] = {{"edges", edges},
                        {"counts", report.histogram->counts},
                        {"underflow", report.histogram->underflow},
                        {"overflow", report.histogram->overflow}};
  }
  return doc;
}

std::vector<double> ti_accuracy_errors(const RegressionModel& model, const TiSpec& spec, double y_range, int points,
                                       Rng& rng) {
  const int p = static_cast<int>(model.factors.size());
  const TiApproximation approx = build_ti_approximation(model, spec, generate_ccd(p));
  const ExactTi exact(model, spec);
  const double scale = y_range > 0.0 ? y_range : 1.0;
  std::vector<double> errors;
  errors.reserve(static_cast<std::size_t>(points));
  std::vector<double> z(static_cast<std::size_t>(p));
  for (int i = 0; i < points; ++i) {
    for (auto& v : z) v = rng.uniform(-1.0, 1.0);
    const Eigen::VectorXd row = expand_point(z, model.terms, model.factors);
    const double mean = predict(model, row).mean;
    const double truth = mean + exact.half_width(leverage(model, row));
    const double approximated = approx_ti(approx, mean).upper;
    errors.push_back((approximated - truth) / scale);
  }
  return errors;
}

StudyReport ti_accuracy_study(const TiAccuracyOptions& options) {
  if (options.iterations < 100) throw Error(ErrorCode::specification, "the accuracy study needs at least 100 iterations");
  if (options.points < 1 || options.p_min < 1 || options.p_min > options.p_max || options.p_max > 14) {
    throw Error(ErrorCode::specification, "invalid accuracy study options");
  }
  StudyReport report;
  report.study = "ti-accuracy";
  report.seed = options.seed;
  report.settings = {{"iterations", options.iterations},
                     {"points", options.points},
                     {"p_min", options.p_min},
                     {"p_max", options.p_max}};
  Histogram hist;
  hist.counts.assign(kHistogramBins, 0);
  double abs_sum = 0.0;
  long total = 0;
  const Rng root(options.seed);
  for (int it = 0; it < options.iterations; ++it) {
    Rng rng = root.split(static_cast<std::uint64_t>(it));
    RandomModelSpec ms;
    ms.p = rng.uniform_int(options.p_min, options.p_max);
    ms.interaction_density = rng.uniform(0.0, 0.5);
    ms.quadratic_density = rng.uniform(0.0, 0.5);
    const TiSpec ti{rng.uniform(0.01, 0.1), rng.uniform(0.9, 0.99)};
    const RandomModel rm = random_model(ms, rng);
    const auto errors = ti_accuracy_errors(rm.model, ti, rm.y_max - rm.y_min, options.points, rng);
    StudyRecord rec;
    rec.method = "approximation";
    rec.problem = "random";
    rec.p = ms.p;
    rec.iteration = it;
    rec.samples = static_cast<long>(errors.size());
    double s = 0.0;
    for (double e : errors) {
      s += std::abs(e);
      rec.max_abs_error = std::max(rec.max_abs_error, std::abs(e));
      hist.add(e);
    }
    rec.mean_abs_error = errors.empty() ? 0.0 : s / static_cast<double>(errors.size());
    abs_sum += s;
    total += rec.samples;
    rec.feasible = true;
    report.records.push_back(rec);
  }
  report.mean_abs_error = total > 0 ? abs_sum / static_cast<double>(total) : 0.0;
  report.histogram = hist;
  report.aggregates = aggregate_records(report.records, "mean_abs_error");
  return report;
}

StudyReport accuracy_study(const std::vector<NamedProblem>& problems, const AccuracyOptions& options) {
  StudyReport report;
  report.study = "accuracy";
  report.settings = {{"grid_resolution", options.grid_resolution}, {"weights", options.weights}};
  for (const auto& np : problems) {
    const int p = static_cast<int>(np.problem.parameters.size());
    report.seed = np.problem.config.seed;
    if (p <= kGridMaxDims) {
      GridSpec gs;
      gs.resolution = options.grid_resolution;
      const auto t0 = std::chrono::steady_clock::now();
      const GridOutcome g = compute_grid_design_space(np.problem, gs);
      StudyRecord rec = record_from_result("grid", np.name, p, seconds_since(t0), g.result);
      rec.feasible = g.box.found;
      report.records.push_back(rec);
    }
    {
      DsProblem first = np.problem;
      first.config.pass2_method = Pass2Method::none;
      const auto t0 = std::chrono::steady_clock::now();
      const DsResult res = compute_design_space(first);
      report.records.push_back(record_from_result("pass1", np.name, p, seconds_since(t0), res));
    }
    if (!options.weights.empty()) {
      DsProblem weighted = np.problem;
      weighted.config.pass2_method = Pass2Method::none;
      apply_weights(weighted, options.weights);
      const auto t0 = std::chrono::steady_clock::now();
      const DsResult res = compute_design_space(weighted);
      report.records.push_back(record_from_result("weighted", np.name, p, seconds_since(t0), res));
    }
    {
      DsProblem both = np.problem;
      if (both.config.pass2_method == Pass2Method::none) both.config.pass2_method = Pass2Method::cobyla;
      const auto t0 = std::chrono::steady_clock::now();
      const DsResult res = compute_design_space(both);
      report.records.push_back(record_from_result("two_pass", np.name, p, seconds_since(t0), res));
    }
  }
  report.aggregates = aggregate_records(report.records, "volume");
  return report;
}

StudyReport timing_study(const TimingOptions& options) {
  if (options.p_min < 1 || options.p_min > options.p_max || options.iterations < 1 || options.grid_iterations < 1) {
    throw Error(ErrorCode::specification, "invalid timing study options");
  }
  StudyReport report;
  report.study = "timing";
  report.seed = options.seed;
  report.settings = {{"p_min", options.p_min},
                     {"p_max", options.p_max},
                     {"iterations", options.iterations},
                     {"grid_resolution", options.grid_resolution},
                     {"grid_max_p", options.grid_max_p},
                     {"grid_iterations", options.grid_iterations},
                     {"corners", options.corners}};
  auto problem_for = [&](int p, int it) {
    RandomModelSpec ms = options.model;
    ms.p = p;
    ms.seed = options.seed * 1000003ULL + static_cast<std::uint64_t>(p) * 1009ULL + static_cast<std::uint64_t>(it);
    DsProblem prob = generate_random_problem(ms).problem;
    prob.config.corner_constraints = options.corners;
    return prob;
  };
  // Warm-up, discarded.
  compute_design_space(problem_for(options.p_min, 0));

  double last_grid = 0.0;
  int last_grid_p = 0;
  for (int p = options.p_min; p <= options.p_max; ++p) {
    for (int it = 0; it < options.iterations; ++it) {
      const DsProblem prob = problem_for(p, it);
      const auto t0 = std::chrono::steady_clock::now();
      const DsResult res = compute_design_space(prob);
      StudyRecord rec = record_from_result("optimizer", "random", p, seconds_since(t0), res);
      rec.iteration = it;
      rec.names.clear();
      rec.lower.clear();
      rec.upper.clear();
      report.records.push_back(rec);
    }
    if (p <= options.grid_max_p) {
      double sum = 0.0;
      for (int it = 0; it < options.grid_iterations; ++it) {
        const NormalizedProblem np = normalize_problem(problem_for(p, it));
        GridSpec gs;
        gs.resolution = options.grid_resolution;
        gs.allow_large = true;
        GridBox box;
        // Grid evaluation plus the box search; short runs are repeated.
        const double secs = timed_mean(
            [&] {
              const FeasibilityTensor t = evaluate_grid(np, gs);
              box = largest_feasible_box(t, setpoint_cell(np.setpoint, gs.resolution));
            },
            0.2);
        StudyRecord rec;
        rec.method = "grid";
        rec.problem = "random";
        rec.p = p;
        rec.iteration = it;
        rec.seconds = secs;
        rec.volume = box.volume;
        rec.weighted_volume = box.volume;
        rec.feasible = box.found;
        report.records.push_back(rec);
        sum += secs;
      }
      last_grid = sum / options.grid_iterations;
      last_grid_p = p;
    } else if (last_grid_p > 0) {
      StudyRecord rec;
      rec.method = "grid";
      rec.problem = "random";
      rec.p = p;
      rec.projected = true;
      rec.seconds = last_grid * std::pow(static_cast<double>(options.grid_resolution), p - last_grid_p);
      report.records.push_back(rec);
    }
  }
  report.aggregates = aggregate_records(report.records, "seconds");
  return report;
}

DsProblem parabola_problem() {
  const auto factors = continuous_factors(2);
  const CcdPlan ccd = generate_ccd(2);
  DsProblem prob;
  prob.parameters = unit_parameters(factors);
  prob.parameters[1].setpoint = -1.0;
  ResponseDef r;
  r.name = "y";
  r.model = prefitted_from_pairs(factors,
                                 {{TermSpec::intercept(), 0.0},
                                  {TermSpec::linear(0), 0.0},
                                  {TermSpec::linear(1), 1.0},
                                  {TermSpec::quadratic(0), 1.0}},
                                 ccd.points, 0.0, "y");
  r.accept_upper = 0.0;
  prob.responses.push_back(std::move(r));
  return prob;
}

DsProblem six_factor_problem() {
  const auto factors = continuous_factors(6);
  const CcdPlan ccd = generate_ccd(6);
  using T = TermSpec;
  const std::vector<std::pair<TermSpec, double>> pairs = {
      {T::intercept(), -0.45},      {T::linear(0), 2.1},          {T::linear(1), -0.93},
      {T::linear(2), 0.63},         {T::linear(3), 0.42},         {T::linear(4), -0.32},
      {T::linear(5), 0.28},         {T::quadratic(1), 0.76},      {T::interaction(0, 1), -0.21},
      {T::interaction(0, 4), -0.34}, {T::interaction(0, 5), 0.22}, {T::interaction(1, 2), 0.27},
      {T::interaction(1, 3), 0.24}, {T::interaction(1, 4), -0.25}, {T::interaction(2, 5), -0.19},
      {T::interaction(3, 5), -0.32}};
  RegressionModel unit = prefitted_from_pairs(factors, pairs, ccd.points, 1.0, "y");

  // Response range and mean interval width (sigma = 1) over a fixed
  // low-discrepancy sample plus the cube corners.
  const ExactTi ti(unit, TiSpec{});
  double ymin = kInfinity, ymax = -kInfinity, width_sum = 0.0;
  long count = 0;
  auto visit = [&](std::span<const double> z) {
    const Eigen::VectorXd row = expand_point(z, unit.terms, unit.factors);
    const double m = predict(unit, row).mean;
    ymin = std::min(ymin, m);
    ymax = std::max(ymax, m);
    width_sum += 2.0 * ti.half_width(leverage(unit, row));
    ++count;
  };
  Halton halton(6);
  std::vector<double> z(6);
  for (int i = 0; i < 4096; ++i) {
    const auto& u = halton.next();
    for (int k = 0; k < 6; ++k) z[static_cast<std::size_t>(k)] = 2.0 * u[static_cast<std::size_t>(k)] - 1.0;
    visit(z);
  }
  for (int c = 0; c < 64; ++c) {
    for (int k = 0; k < 6; ++k) z[static_cast<std::size_t>(k)] = ((c >> k) & 1) ? 1.0 : -1.0;
    visit(z);
  }
  const double range = ymax - ymin;
  const double sigma = 0.1 * range / (width_sum / static_cast<double>(count));
  unit.sigma2 = sigma * sigma;

  DsProblem prob;
  prob.parameters = unit_parameters(factors);
  ResponseDef r;
  r.name = "y";
  r.model = unit;
  r.accept_lower = ymin + 0.2 * range;
  r.accept_upper = ymax - 0.2 * range;
  prob.responses.push_back(std::move(r));
  return prob;
}

void apply_weights(DsProblem& problem, const std::map<std::string, double>& weights) {
  for (const auto& [name, w] : weights) {
    const int idx = problem.parameter_index(name);
    if (idx < 0) throw Error(ErrorCode::specification, "unknown parameter '" + name + "' in weights");
    problem.parameters[static_cast<std::size_t>(idx)].weight = w;
  }
}

}  // namespace dspace
