#pragma once

// Training data ingestion and model specifications for fitting.

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "dspace/json_io.hpp"
#include "dspace/model.hpp"

namespace dspace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;
};

// RFC 4180 style: comma separated, optional double quotes, CRLF tolerated,
// blank lines skipped. Ragged rows are parse errors naming the line.
CsvTable read_csv(std::istream& in, const std::string& source = "csv");
CsvTable read_csv_file(const std::filesystem::path& path);

// Model specification document:
//   { "response": "y",                        optional, default last column
//     "factors": [ {"name": "x1"},
//                  {"name": "c", "levels": ["a", "b"]},
//                  {"name": "d", "categorical": true} ],   optional
//     "model": "linear" | "interaction" | "quadratic",     preset, or
//     "terms": [ "1", "x1", "x1:x2", "x1^2", "c", ... ] }
// Without "factors" every non-response column is a continuous factor.
// Categorical factors without listed levels take them from the data in
// order of first appearance. A bare categorical name in "terms" expands to
// its full sum-coded block.
struct ModelSpec {
  std::string response;
  std::vector<Factor> factors;
  std::vector<TermSpec> terms;  // canonical order
};

// `response_override` (non-empty) replaces the document's response.
ModelSpec resolve_model_spec(const Json& spec, const CsvTable& table, const std::string& response_override = {});

// Preset term lists over the given factors (intercept always included;
// quadratics only for continuous factors, interactions only between them).
std::vector<TermSpec> preset_terms(const std::string& preset, const std::vector<Factor>& factors);

RegressionModel fit_from_table(const ModelSpec& spec, const CsvTable& table);

}  // namespace dspace
