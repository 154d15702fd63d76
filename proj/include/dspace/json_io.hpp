#pragma once

// JSON documents. Every top-level object carries "schema_version": 1.
// Infinite values (one-sided acceptance limits, unused margins) are written
// as null and read back as infinities of the appropriate sign.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "dspace/model.hpp"
#include "dspace/problem.hpp"
#include "dspace/tolerance.hpp"

namespace dspace {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Parse errors carry ErrorCode::parse.
Json parse_json(const std::string& text);
Json read_json_file(const std::filesystem::path& path);
// Two-space indentation plus a trailing newline; stable for identical input.
std::string dump_json(const Json& doc);
void write_text_file(const std::filesystem::path& path, const std::string& text);

Json term_to_json(const TermSpec& term, const std::vector<Factor>& factors);
// Accepts the object form or the shorthand strings "1", "x", "x:y", "x^2"
// and "c[j]". A bare categorical factor name is rejected here; model specs
// expand it to the full level block.
TermSpec term_from_json(const Json& doc, const std::vector<Factor>& factors);

Json model_to_json(const RegressionModel& model);
RegressionModel model_from_json(const Json& doc);

Json ti_approximation_to_json(const TiApproximation& approx);
TiApproximation ti_approximation_from_json(const Json& doc);

Json optimizer_config_to_json(const OptimizerConfig& config);
// Starts from `base`; keys absent from `doc` keep their value.
OptimizerConfig optimizer_config_from_json(const Json& doc, OptimizerConfig base = {});

Json problem_to_json(const DsProblem& problem);
// Responses may reference a model file ("model_file"), resolved against
// `base_dir`.
DsProblem problem_from_json(const Json& doc, const std::filesystem::path& base_dir = {});

Json result_to_json(const DsResult& result);
DsResult result_from_json(const Json& doc);

// Limits: null <-> infinity.
Json limit_to_json(double value);
double limit_from_json(const Json& doc, double infinite_value);

}  // namespace dspace
