#include "dspace/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "dspace/error.hpp"

namespace dspace {

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::parse, what); }

// Splits one record; returns false at end of input. Quoted fields may span
// lines.
bool next_record(std::istream& in, std::vector<std::string>& fields, long& line, const std::string& source) {
  fields.clear();
  std::string field;
  bool quoted = false;
  bool any = false;
  char ch;
  while (in.get(ch)) {
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch == '\r') {
      continue;
    } else if (ch == '\n') {
      ++line;
      fields.push_back(field);
      return true;
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) fail(source + ": unterminated quote near line " + std::to_string(line));
  if (!any) return false;
  fields.push_back(field);
  return true;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool blank(const std::vector<std::string>& fields) {
  return std::all_of(fields.begin(), fields.end(), [](const std::string& f) { return trim(f).empty(); });
}

double parse_cell(const std::string& text, std::size_t row, const std::string& column) {
  const std::string s = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    fail("row " + std::to_string(row + 1) + ", column '" + column + "': '" + s + "' is not a number");
  }
  return v;
}

int factor_named(const std::vector<Factor>& factors, const std::string& name) {
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (factors[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable t;
  std::vector<std::string> fields;
  long line = 1;
  while (true) {
    const long start = line;
    if (!next_record(in, fields, line, source)) break;
    if (blank(fields)) continue;
    for (auto& f : fields) f = trim(f);
    if (t.header.empty()) {
      t.header = fields;
      for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (t.header[i].empty()) fail(source + ": empty column name in the header");
        for (std::size_t j = 0; j < i; ++j) {
          if (t.header[j] == t.header[i]) fail(source + ": duplicate column '" + t.header[i] + "'");
        }
      }
      continue;
    }
    if (fields.size() != t.header.size()) {
      fail(source + ": line " + std::to_string(start) + " has " + std::to_string(fields.size()) +
           " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(fields);
  }
  if (t.header.empty()) fail(source + ": no header row");
  return t;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot read '" + path.string() + "'");
  return read_csv(in, path.string());
}

std::vector<TermSpec> preset_terms(const std::string& preset, const std::vector<Factor>& factors) {
  if (preset != "linear" && preset != "interaction" && preset != "quadratic") {
    fail("unknown model preset '" + preset + "' (linear, interaction or quadratic)");
  }
  std::vector<TermSpec> terms{TermSpec::intercept()};
  const int k = static_cast<int>(factors.size());
  for (int f = 0; f < k; ++f) {
    if (factors[static_cast<std::size_t>(f)].categorical()) {
      const int levels = static_cast<int>(factors[static_cast<std::size_t>(f)].levels.size());
      for (int l = 0; l + 1 < levels; ++l) terms.push_back(TermSpec::categorical_level(f, l));
    } else {
      terms.push_back(TermSpec::linear(f));
    }
  }
  if (preset != "linear") {
    for (int f = 0; f < k; ++f) {
      for (int g = f + 1; g < k; ++g) {
        if (!factors[static_cast<std::size_t>(f)].categorical() && !factors[static_cast<std::size_t>(g)].categorical()) {
          terms.push_back(TermSpec::interaction(f, g));
        }
      }
    }
  }
  if (preset == "quadratic") {
    for (int f = 0; f < k; ++f) {
      if (!factors[static_cast<std::size_t>(f)].categorical()) terms.push_back(TermSpec::quadratic(f));
    }
  }
  return canonicalize_terms(std::move(terms), factors);
}

ModelSpec resolve_model_spec(const Json& spec, const CsvTable& table, const std::string& response_override) {
  if (!spec.is_object()) fail("model spec: expected an object");
  if (auto it = spec.find("schema_version"); it != spec.end() && (!it->is_number_integer() || it->get<int>() != kSchemaVersion)) {
    fail("model spec: unsupported schema_version (expected 1)");
  }
  ModelSpec out;
  if (!response_override.empty()) {
    out.response = response_override;
  } else if (auto it = spec.find("response"); it != spec.end()) {
    if (!it->is_string()) fail("model spec: response must be a string");
    out.response = it->get<std::string>();
  } else {
    out.response = table.header.back();
  }
  const int ycol = table.column(out.response);
  if (ycol < 0) fail("response column '" + out.response + "' not found in the data");

  if (auto it = spec.find("factors"); it != spec.end()) {
    if (!it->is_array()) fail("model spec: factors must be an array");
    for (const auto& jf : *it) {
      if (!jf.is_object() || !jf.contains("name") || !jf["name"].is_string()) {
        fail("model spec: every factor needs a name");
      }
      Factor f;
      f.name = jf["name"].get<std::string>();
      const int col = table.column(f.name);
      if (col < 0) fail("factor '" + f.name + "' not found in the data");
      if (col == ycol) fail("factor '" + f.name + "' is the response column");
      if (auto lv = jf.find("levels"); lv != jf.end()) {
        if (!lv->is_array() || lv->size() < 2) fail("factor '" + f.name + "': levels must list at least two labels");
        for (const auto& l : *lv) {
          if (!l.is_string()) fail("factor '" + f.name + "': levels must be strings");
          f.levels.push_back(l.get<std::string>());
        }
      } else if (jf.value("categorical", false)) {
        for (const auto& row : table.rows) {
          const std::string& label = row[static_cast<std::size_t>(col)];
          if (std::find(f.levels.begin(), f.levels.end(), label) == f.levels.end()) f.levels.push_back(label);
        }
        if (f.levels.size() < 2) fail("factor '" + f.name + "': fewer than two levels in the data");
      }
      if (factor_named(out.factors, f.name) >= 0) fail("model spec: duplicate factor '" + f.name + "'");
      out.factors.push_back(f);
    }
  } else {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (static_cast<int>(c) != ycol) out.factors.push_back({table.header[c], {}});
    }
  }

  const bool has_terms = spec.contains("terms");
  const bool has_preset = spec.contains("model");
  if (has_terms && has_preset) fail("model spec: give either \"terms\" or \"model\", not both");
  if (has_terms) {
    const Json& jt = spec["terms"];
    if (!jt.is_array()) fail("model spec: terms must be an array");
    std::vector<TermSpec> terms;
    for (const auto& t : jt) {
      if (t.is_string()) {
        const int f = factor_named(out.factors, t.get<std::string>());
        if (f >= 0 && out.factors[static_cast<std::size_t>(f)].categorical()) {
          const int levels = static_cast<int>(out.factors[static_cast<std::size_t>(f)].levels.size());
          for (int l = 0; l + 1 < levels; ++l) terms.push_back(TermSpec::categorical_level(f, l));
          continue;
        }
      }
      terms.push_back(term_from_json(t, out.factors));
    }
    out.terms = canonicalize_terms(std::move(terms), out.factors);
  } else {
    std::string preset = "linear";
    if (has_preset) {
      if (!spec["model"].is_string()) fail("model spec: model must be a string");
      preset = spec["model"].get<std::string>();
    }
    out.terms = preset_terms(preset, out.factors);
  }
  return out;
}

RegressionModel fit_from_table(const ModelSpec& spec, const CsvTable& table) {
  const int ycol = table.column(spec.response);
  if (ycol < 0) fail("response column '" + spec.response + "' not found in the data");
  const std::size_t n = table.rows.size();
  DataTable data(spec.factors.size());
  for (std::size_t f = 0; f < spec.factors.size(); ++f) {
    const int col = table.column(spec.factors[f].name);
    if (col < 0) fail("factor '" + spec.factors[f].name + "' not found in the data");
    for (std::size_t r = 0; r < n; ++r) {
      const std::string& cell = table.rows[r][static_cast<std::size_t>(col)];
      if (spec.factors[f].categorical()) {
        data[f].labels.push_back(cell);
      } else {
        data[f].values.push_back(parse_cell(cell, r, spec.factors[f].name));
      }
    }
  }
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    y(static_cast<Eigen::Index>(r)) = parse_cell(table.rows[r][static_cast<std::size_t>(ycol)], r, spec.response);
  }
  return fit_model(spec.factors, spec.terms, data, y, spec.response);
}

}  // namespace dspace
