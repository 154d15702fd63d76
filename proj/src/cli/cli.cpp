#include "dspace/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>

#include "dspace/bench.hpp"
#include "dspace/dataset.hpp"
#include "dspace/engine.hpp"
#include "dspace/error.hpp"
#include "dspace/grid.hpp"
#include "dspace/json_io.hpp"
#include "dspace/service.hpp"

namespace dspace {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::map<std::string, double> parse_weights(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--weights expects name=value, got '" + item + "'");
    const std::string value = item.substr(eq + 1);
    double w = 0.0;
    const auto r = std::from_chars(value.data(), value.data() + value.size(), w);
    if (r.ec != std::errc() || r.ptr != value.data() + value.size() || !std::isfinite(w)) {
      throw UsageError("--weights: '" + value + "' is not a number");
    }
    out[item.substr(0, eq)] = w;
  }
  return out;
}

Json read_json_input(const std::string& path) {
  if (path == "-") {
    std::string text((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
    return parse_json(text);
  }
  return read_json_file(path);
}

DsProblem load_problem(const std::string& path) {
  const std::filesystem::path base = path == "-" ? std::filesystem::current_path()
                                                 : std::filesystem::path(path).parent_path();
  DsProblem problem = problem_from_json(read_json_input(path), base);
  problem.validate();
  return problem;
}

void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
  } else {
    write_text_file(out_path, text);
  }
}

int exit_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::singular_fit:
      return kExitRankDeficient;
    case ErrorCode::timeout:
      return kExitTimeout;
    case ErrorCode::numeric:
      return kExitInternal;
    case ErrorCode::infeasible:
      return kExitInfeasible;
    default:
      return kExitUsage;
  }
}

void write_report(const StudyReport& report, const std::string& dir, std::ostream& out) {
  const std::filesystem::path base = dir.empty() ? "." : dir;
  std::filesystem::create_directories(base);
  std::string stem = report.study;
  std::replace(stem.begin(), stem.end(), '-', '_');
  write_text_file(base / (stem + ".json"), dump_json(report_to_json(report)));
  write_text_file(base / (stem + ".csv"), report_to_csv(report));
  write_text_file(base / (stem + "_plot.json"), dump_json(report_plot_data(report)));
  out << "wrote " << (base / (stem + ".json")).string() << ", " << (base / (stem + ".csv")).string() << ", "
      << (base / (stem + "_plot.json")).string() << "\n";
}

void print_aggregates(const StudyReport& report, std::ostream& out) {
  for (const auto& a : report.aggregates) {
    out << std::left << std::setw(14) << a.method << " p=" << std::setw(3) << a.p << ' ' << a.metric
        << " mean=" << a.mean << " sd=" << a.sd << " n=" << a.count << (a.projected ? " (projected)" : "") << "\n";
  }
}

HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Design-space computation: largest parameter box whose tolerance intervals meet acceptance limits"};
  app.name("dspace");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit an OLS model from CSV data");
  std::string data_path, spec_path, model_out, response;
  fit->add_option("--data", data_path, "Training data CSV")->required();
  fit->add_option("--spec", spec_path, "Model specification JSON (optional; default linear in all columns)");
  fit->add_option("--out", model_out, "Model JSON output")->required();
  fit->add_option("--response", response, "Response column (default: spec or last column)");

  // compute
  auto* compute = app.add_subcommand("compute", "Compute the design space of a problem");
  std::string problem_path, result_out;
  std::optional<std::string> pass2;
  std::optional<double> rho1, rho2, timeout;
  std::optional<int> starts;
  std::optional<std::uint64_t> seed;
  bool no_corners = false;
  std::vector<std::string> weights;
  compute->add_option("problem", problem_path, "Problem JSON ('-' for stdin)")->required();
  compute->add_option("--pass2", pass2, "Second pass method")->check(CLI::IsMember({"cobyla", "slsqp", "none"}));
  compute->add_option("--rho1", rho1, "Initial trust-region radius of pass 1");
  compute->add_option("--rho2", rho2, "Initial trust-region radius of pass 2");
  compute->add_flag("--no-corners", no_corners, "Drop the corner constraint block");
  compute->add_option("--starts", starts, "Number of pass-1 starts");
  compute->add_option("--seed", seed, "Seed for additional starts");
  compute->add_option("--timeout", timeout, "Deadline in seconds (0 = none)");
  compute->add_option("--weights", weights, "Parameter weights as name=value")->expected(1, -1);
  compute->add_option("--out", result_out, "Write the result JSON here instead of stdout");

  // grid
  auto* grid = app.add_subcommand("grid", "Grid-discretization baseline");
  std::string grid_problem, grid_out;
  int resolution = 9;
  bool allow_large = false;
  grid->add_option("problem", grid_problem, "Problem JSON ('-' for stdin)")->required();
  grid->add_option("--resolution", resolution, "Points per dimension")->capture_default_str();
  grid->add_flag("--allow-large", allow_large, "Permit more than 6 dimensions");
  grid->add_option("--out", grid_out, "Write the result JSON here instead of stdout");

  // canned
  auto* canned = app.add_subcommand("canned", "Print a built-in example problem");
  std::string canned_name, canned_out;
  canned->add_option("name", canned_name, "Example name")->required()->check(CLI::IsMember({"parabola", "six-factor"}));
  canned->add_option("--out", canned_out, "Write the problem JSON here instead of stdout");

  // bench
  auto* bench = app.add_subcommand("bench", "Simulation studies");
  bench->require_subcommand(1);
  std::string out_dir = ".";
  std::uint64_t bench_seed = 0;

  auto* ti = bench->add_subcommand("ti-accuracy", "Accuracy of the interval approximation");
  TiAccuracyOptions ti_opts;
  ti->add_option("--iters", ti_opts.iterations, "Iterations")->capture_default_str();
  ti->add_option("--points", ti_opts.points, "Evaluation points per iteration")->capture_default_str();
  ti->add_option("--pmin", ti_opts.p_min, "Smallest factor count")->capture_default_str();
  ti->add_option("--pmax", ti_opts.p_max, "Largest factor count")->capture_default_str();
  ti->add_option("--seed", bench_seed, "Seed");
  ti->add_option("--out-dir", out_dir, "Report directory")->capture_default_str();

  auto* acc = bench->add_subcommand("accuracy", "Optimizer versus grid volumes");
  std::vector<std::string> acc_problems;
  int acc_random = 20, acc_pmin = 2, acc_pmax = 5;
  bool acc_no_canned = false;
  std::vector<std::string> acc_weights;
  AccuracyOptions acc_opts;
  acc->add_option("--problem", acc_problems, "Additional problem JSON files");
  acc->add_option("--random", acc_random, "Random problems")->capture_default_str();
  acc->add_option("--pmin", acc_pmin, "Smallest random dimension")->capture_default_str();
  acc->add_option("--pmax", acc_pmax, "Largest random dimension")->capture_default_str();
  acc->add_flag("--no-canned", acc_no_canned, "Skip the six-factor example");
  acc->add_option("--resolution", acc_opts.grid_resolution, "Grid points per dimension")->capture_default_str();
  acc->add_option("--weights", acc_weights, "Weights for the weighted run, name=value")->expected(1, -1);
  acc->add_option("--seed", bench_seed, "Seed");
  acc->add_option("--out-dir", out_dir, "Report directory")->capture_default_str();

  auto* tim = bench->add_subcommand("timing", "Runtime scaling over the dimension");
  TimingOptions tim_opts;
  bool tim_no_corners = false;
  tim->add_option("--pmin", tim_opts.p_min, "Smallest dimension")->capture_default_str();
  tim->add_option("--pmax", tim_opts.p_max, "Largest dimension")->capture_default_str();
  tim->add_option("--iters", tim_opts.iterations, "Problems per dimension")->capture_default_str();
  tim->add_option("--resolution", tim_opts.grid_resolution, "Grid points per dimension")->capture_default_str();
  tim->add_option("--grid-max-p", tim_opts.grid_max_p, "Largest measured grid dimension")->capture_default_str();
  tim->add_flag("--no-corners", tim_no_corners, "Drop the corner constraint block");
  tim->add_option("--seed", bench_seed, "Seed");
  tim->add_option("--out-dir", out_dir, "Report directory")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::optional<std::string> host, storage, token;
  std::optional<int> port;
  std::optional<double> serve_timeout;
  serve->add_option("--host", host, "Bind address (env DSPACE_BIND)");
  serve->add_option("--port", port, "Port (env DSPACE_BIND)");
  serve->add_option("--storage", storage, "Session directory (env DSPACE_STORAGE_DIR)");
  serve->add_option("--token", token, "API token (env DSPACE_API_TOKEN)");
  serve->add_option("--timeout", serve_timeout, "Compute timeout in seconds (env DSPACE_COMPUTE_TIMEOUT)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    std::string what = e.what();
    // An unknown word in subcommand position surfaces as a missing subcommand.
    const bool in_bench = bench->parsed();
    const auto& words = args;
    const auto pos = in_bench ? std::find(words.begin(), words.end(), "bench") + 1 : words.begin();
    if (pos < words.end() && !pos->empty() && pos->front() != '-') {
      const bool known = in_bench ? bench->get_subcommand_no_throw(*pos) != nullptr
                                  : app.get_subcommand_no_throw(*pos) != nullptr;
      if (!known) what = "unknown subcommand '" + *pos + "'";
    }
    err << "error: " << what << "\n\n" << (in_bench ? bench->help() : app.help());
    return kExitUsage;
  }

  try {
    if (*fit) {
      const CsvTable table = read_csv_file(data_path);
      const Json spec = spec_path.empty() ? Json::object() : read_json_file(spec_path);
      const ModelSpec ms = resolve_model_spec(spec, table, response);
      const RegressionModel model = fit_from_table(ms, table);
      write_text_file(model_out, dump_json(model_to_json(model)));
      out << std::left << std::setw(20) << "term" << std::right << std::setw(16) << "estimate" << std::setw(16)
          << "std.error" << "\n";
      for (std::size_t i = 0; i < model.terms.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out << std::left << std::setw(20) << term_label(model.terms[i], model.factors) << std::right
            << std::setw(16) << std::setprecision(6) << model.beta(k) << std::setw(16)
            << std::sqrt(model.sigma2 * model.xtx_inverse(k, k)) << "\n";
      }
      out << "sigma2 = " << std::setprecision(8) << model.sigma2 << "  (n = " << model.n
          << ", residual df = " << model.residual_df() << ")\n";
      return kExitOk;
    }
    if (*compute) {
      DsProblem problem = load_problem(problem_path);
      if (pass2) problem.config.pass2_method = pass2_method_from_string(*pass2);
      if (rho1) problem.config.rho_start_pass1 = *rho1;
      if (rho2) problem.config.rho_start_pass2 = *rho2;
      if (no_corners) problem.config.corner_constraints = false;
      if (starts) problem.config.starts = *starts;
      if (seed) problem.config.seed = *seed;
      if (timeout) problem.config.timeout_seconds = *timeout;
      apply_weights(problem, parse_weights(weights));
      problem.validate();
      const DsResult res = compute_design_space(problem);
      emit(dump_json(result_to_json(res)), result_out, out);
      if (!res.feasible()) err << to_string(res.status) << ": " << res.message << "\n";
      return res.feasible() ? kExitOk : kExitInfeasible;
    }
    if (*grid) {
      const DsProblem problem = load_problem(grid_problem);
      GridSpec gs;
      gs.resolution = resolution;
      gs.allow_large = allow_large;
      const GridOutcome g = compute_grid_design_space(problem, gs);
      emit(dump_json(result_to_json(g.result)), grid_out, out);
      err << "grid: " << g.points << " points, " << g.feasible_points << " feasible, " << g.box.boxes_examined
          << " boxes examined\n";
      if (!g.result.feasible()) err << to_string(g.result.status) << ": " << g.result.message << "\n";
      return g.result.feasible() ? kExitOk : kExitInfeasible;
    }
    if (*canned) {
      const DsProblem problem = canned_name == "parabola" ? parabola_problem() : six_factor_problem();
      emit(dump_json(problem_to_json(problem)), canned_out, out);
      return kExitOk;
    }
    if (*bench) {
      if (*ti) {
        ti_opts.seed = bench_seed;
        const StudyReport report = ti_accuracy_study(ti_opts);
        write_report(report, out_dir, out);
        out << "iterations=" << ti_opts.iterations << " mean_abs_error=" << report.mean_abs_error << "\n";
        return kExitOk;
      }
      if (*acc) {
        if (acc_pmin < 1 || acc_pmin > acc_pmax || acc_random < 0) throw UsageError("invalid random problem range");
        acc_opts.weights = parse_weights(acc_weights);
        std::vector<NamedProblem> problems;
        if (!acc_no_canned) problems.push_back({"six-factor", six_factor_problem()});
        for (const auto& path : acc_problems) problems.push_back({std::filesystem::path(path).stem().string(), load_problem(path)});
        for (int i = 0; i < acc_random; ++i) {
          RandomModelSpec ms;
          ms.p = acc_pmin + i % (acc_pmax - acc_pmin + 1);
          ms.seed = bench_seed * 7919ULL + static_cast<std::uint64_t>(i);
          problems.push_back({"random-" + std::to_string(i), generate_random_problem(ms).problem});
        }
        const StudyReport report = accuracy_study(problems, acc_opts);
        write_report(report, out_dir, out);
        print_aggregates(report, out);
        return kExitOk;
      }
      if (*tim) {
        tim_opts.seed = bench_seed;
        tim_opts.corners = !tim_no_corners;
        const StudyReport report = timing_study(tim_opts);
        write_report(report, out_dir, out);
        print_aggregates(report, out);
        return kExitOk;
      }
    }
    if (*serve) {
      ServiceConfig cfg = ServiceConfig::from_env();
      if (host) cfg.host = *host;
      if (port) cfg.port = *port;
      if (storage) cfg.storage_dir = *storage;
      if (token) cfg.api_token = *token;
      if (serve_timeout) cfg.compute_timeout_seconds = *serve_timeout;
      Service service(cfg);
      HttpServer server(service);
      const int bound = server.bind();
      out << "listening on " << cfg.host << ":" << bound << std::endl;
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      g_server = nullptr;
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace dspace
