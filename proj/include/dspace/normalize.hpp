#pragma once

// Optimization space: every continuous parameter is mapped affinely onto
// [-1, 1]; every categorical parameter with distinct level effects becomes a
// relaxed continuous dimension spanning [min effect, max effect].

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dspace/problem.hpp"
#include "dspace/tolerance.hpp"

namespace dspace {

struct CategoricalRelaxation {
  std::vector<double> effects;  // per level, coding order
  std::vector<int> order;       // level indices by ascending effect
  double midpoint = 0.0;
  double range = 0.0;  // max effect - min effect
  bool dropped = false;

  // Effect scale <-> relaxed coordinate in [-1, 1].
  double coordinate(double effect) const;
  double effect(double coordinate) const;
  int levels() const { return static_cast<int>(effects.size()); }
};

// Zero effect range drops the factor from the optimization.
CategoricalRelaxation relax_categorical(const CategoricalCoding& coding);

// Levels whose effect lies in the closed interval [effect_lower, effect_upper]
// (tolerance `tol`), returned in coding order.
std::vector<int> map_levels(const CategoricalRelaxation& relaxation, double effect_lower,
                            double effect_upper, double tol = 1e-9);

// Sum-code row at a relaxed coordinate: linear interpolation between the
// codes of the two levels adjacent in effect order, so that the coding
// model's prediction moves linearly with the coordinate. `slope` receives
// d code / d coordinate. Both spans have k - 1 entries.
void relaxed_code(const CategoricalRelaxation& relaxation, double coordinate, std::span<double> code,
                  std::span<double> slope);

// Re-expresses a raw-unit model in normalized units x = centre + half * z.
// Lower-order terms needed to absorb the centre offsets are added with zero
// raw coefficients; n and p_terms (hence the residual df) are preserved.
// Entries of `centres` / `half_ranges` for categorical factors are ignored.
RegressionModel normalize_model(const RegressionModel& model, std::span<const double> centres,
                                std::span<const double> half_ranges);

struct Dimension {
  int parameter = -1;
  bool categorical = false;
  double centre = 0.0;
  double half_range = 1.0;
};

struct Transform {
  std::vector<Dimension> dims;
  std::vector<int> parameter_dim;  // -1 for dropped categoricals
  std::vector<std::optional<CategoricalRelaxation>> relaxations;  // per parameter
  std::vector<int> relaxation_source;  // response defining the relaxation, -1 if none

  // Continuous: raw units. Categorical: level-effect scale.
  double to_normalized(int dim, double value) const;
  double to_raw(int dim, double normalized) const;
};

enum class TiMode { approximate, exact };
enum class Side { lower, upper };

// One response expressed over the optimization dimensions.
class ResponseSurface {
 public:
  ResponseSurface(const ResponseDef& def, const DsProblem& problem, const Transform& transform);

  const std::string& name() const { return name_; }
  double accept_lower() const { return accept_lower_; }
  double accept_upper() const { return accept_upper_; }
  const RegressionModel& normalized_model() const { return model_; }
  const TiApproximation& approximation() const { return approx_; }
  const TiSpec& ti_spec() const { return exact_.spec(); }
  // Optimization dimensions the response depends on.
  const std::vector<int>& active_dims() const { return active_dims_; }
  int dims() const { return dims_; }

  struct Value {
    double mean = 0.0;
    double half_width = 0.0;
    double lower() const { return mean - half_width; }
    double upper() const { return mean + half_width; }
  };

  // Gradients are written when the spans are non-empty (size dims()).
  Value evaluate(std::span<const double> z, TiMode mode, std::span<double> grad_mean = {},
                 std::span<double> grad_half_width = {}) const;

  double mean(std::span<const double> z) const;

  // Lower or upper interval boundary with optional gradient.
  double boundary(std::span<const double> z, Side side, TiMode mode, std::span<double> grad = {}) const;

  // Term row at z. Enumerated (dropped) categorical factors use `combination`.
  void term_row(std::span<const double> z, int combination, Eigen::VectorXd& row) const;

 private:
  struct CompiledTerm {
    TermKind kind;
    int d1 = -1;    // optimization dimension of the first factor
    int d2 = -1;    // second factor (interaction)
    int slot = -1;  // categorical slot
    int column = -1;
  };
  struct CategoricalSlot {
    int dim = -1;  // relaxed dimension, -1 when enumerated
    std::optional<CategoricalRelaxation> relaxation;
    int levels = 0;
  };

  void fill_codes(std::span<const double> z, int combination, std::vector<double>& codes,
                  std::vector<double>& slopes) const;
  void accumulate_gradient(std::span<const double> z, const std::vector<double>& slopes,
                           const Eigen::VectorXd& weights, std::span<double> grad) const;

  std::string name_;
  double accept_lower_;
  double accept_upper_;
  int dims_ = 0;
  RegressionModel model_;
  std::vector<CompiledTerm> terms_;
  std::vector<CategoricalSlot> slots_;
  std::vector<int> slot_offset_;  // into the flattened code vector
  int combinations_ = 1;          // product of enumerated level counts
  std::vector<int> active_dims_;
  ExactTi exact_;
  TiApproximation approx_;
};

struct NormalizedProblem {
  int dims = 0;
  Transform transform;
  std::vector<std::string> dim_names;
  std::vector<double> setpoint;
  std::vector<double> lower;  // screening bounds, normalized (-1)
  std::vector<double> upper;  // (+1)
  std::vector<double> weights;
  std::vector<ResponseSurface> responses;
  OptimizerConfig config;
};

NormalizedProblem normalize_problem(const DsProblem& problem);

// Candidate of 2d normalized values <-> raw units (effect scale for
// categorical dimensions).
std::vector<double> denormalize_candidate(const Transform& transform, std::span<const double> x);
std::vector<double> normalize_candidate(const Transform& transform, std::span<const double> raw);

}  // namespace dspace
