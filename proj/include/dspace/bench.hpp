#pragma once

// Desk-scale simulation studies: interval-approximation accuracy, optimizer
// versus grid accuracy, and runtime scaling.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dspace/grid.hpp"
#include "dspace/json_io.hpp"
#include "dspace/problem.hpp"
#include "dspace/rng.hpp"

namespace dspace {

struct RandomModelSpec {
  int p = 3;
  double main_min = 0.2;  // |coefficient| ranges, random sign
  double main_max = 2.0;
  double interaction_min = 0.05;
  double interaction_max = 0.6;
  double quadratic_min = 0.05;
  double quadratic_max = 0.8;
  double interaction_density = 0.3;
  double quadratic_density = 0.3;
  double sigma_min = 0.05;
  double sigma_max = 0.3;
  int n = 0;  // 0: max(2 p_terms + 5, 20)
  double alpha = 0.05;
  double psi = 0.99;
  double target_feasible = 0.4;  // fraction of the cube inside the limits
  std::uint64_t seed = 0;

  void validate() const;
};

struct RandomModel {
  RegressionModel model;
  double sigma = 0.0;  // noise level used for the training data
  double y_min = 0.0;  // training response range
  double y_max = 0.0;
};

// Random polynomial fitted to noisy uniform training data on [-1, 1]^p.
RandomModel random_model(const RandomModelSpec& spec, Rng& rng);

struct GeneratedProblem {
  DsProblem problem;
  int attempts = 1;
  double calibrated_fraction = 0.0;  // on the calibration sample
};

// Acceptance limits are a band around the median prediction, widened until
// the requested fraction of calibration points has both interval boundaries
// inside it. The setpoint is the cube centre; a problem whose centre is
// infeasible is regenerated from the next sub-seed (at most 20 attempts).
GeneratedProblem generate_random_problem(const RandomModelSpec& spec);

// Share of `points` uniform cube points where every response's exact
// interval lies inside its limits.
double feasible_fraction(const DsProblem& problem, int points, std::uint64_t seed);

struct Histogram {
  double lower = -0.1;
  double upper = 0.1;
  std::vector<long> counts;
  long underflow = 0;
  long overflow = 0;

  void add(double value);
  long total() const;
};

struct StudyRecord {
  std::string method;
  std::string problem;
  int p = 0;
  int iteration = 0;
  double seconds = 0.0;
  double volume = 0.0;
  double weighted_volume = 0.0;
  bool feasible = false;
  bool projected = false;
  double mean_abs_error = 0.0;
  double max_abs_error = 0.0;
  long samples = 0;
  std::vector<std::string> names;  // parameter ranges (accuracy study)
  std::vector<double> lower;
  std::vector<double> upper;
};

struct StudyAggregate {
  std::string method;
  int p = 0;
  std::string metric;
  long count = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single record
  bool projected = false;
};

struct StudyReport {
  std::string study;
  std::uint64_t seed = 0;
  Json settings = Json::object();
  std::vector<StudyRecord> records;
  std::vector<StudyAggregate> aggregates;
  std::optional<Histogram> histogram;
  double mean_abs_error = 0.0;  // interval accuracy study only
};

// Groups by (method, p) in first-appearance order.
std::vector<StudyAggregate> aggregate_records(const std::vector<StudyRecord>& records, const std::string& metric);

Json report_to_json(const StudyReport& report);
StudyReport report_from_json(const Json& doc);
std::string report_to_csv(const StudyReport& report);
// Series per method for plotting (times versus p, or the error histogram).
Json report_plot_data(const StudyReport& report);

// One accuracy iteration: normalized errors (approx - exact) / (y_max - y_min)
// of the upper boundary at `points` uniform cube points; y range of the
// training response.
std::vector<double> ti_accuracy_errors(const RegressionModel& model, const TiSpec& spec, double y_range, int points,
                                       Rng& rng);

struct TiAccuracyOptions {
  int iterations = 1000;
  int points = 200;
  int p_min = 2;
  int p_max = 8;
  std::uint64_t seed = 0;
};

StudyReport ti_accuracy_study(const TiAccuracyOptions& options);

struct NamedProblem {
  std::string name;
  DsProblem problem;
};

struct AccuracyOptions {
  int grid_resolution = 9;
  std::map<std::string, double> weights;  // weighted run iff non-empty
};

// Per problem: grid (p <= 6), pass 1 only, weighted pass 1 (optional) and
// the two-pass optimizer.
StudyReport accuracy_study(const std::vector<NamedProblem>& problems, const AccuracyOptions& options);

struct TimingOptions {
  int p_min = 2;
  int p_max = 10;
  int iterations = 10;
  int grid_resolution = 8;
  int grid_max_p = kGridMaxDims;  // measured up to here, projected above
  int grid_iterations = 1;
  bool corners = true;
  std::uint64_t seed = 0;
  RandomModelSpec model;  // p and seed are set per run
};

StudyReport timing_study(const TimingOptions& options);

// Canned problems.
// x1^2 + x2 without noise, upper limit 0, setpoint (0, -1) on [-1, 1]^2.
// The optimal box is |x1| <= 1/sqrt(3), x2 in [-1, -1/3].
DsProblem parabola_problem();
// Fixed six-factor benchmark model with desk defaults:
// face-centred CCD training design (n = 81), sigma chosen so the mean
// interval width is 10 % of the response range, alpha 0.05, psi 0.99,
// limits at the central 60 % of the response range, setpoint at the centre.
DsProblem six_factor_problem();

// Applies name=weight overrides; unknown names are specification errors.
void apply_weights(DsProblem& problem, const std::map<std::string, double>& weights);

}  // namespace dspace
