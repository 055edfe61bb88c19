// Command-line frontend: exponent, cutoff, rd, trace, oracle.
//
// Every command builds a RunRecord. By default a short human-readable
// summary (or CSV, for rd and trace) goes to `out`; --json prints the record
// instead and --record FILE additionally writes it to a file.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cdexp/engine.hpp"
#include "cdexp/io.hpp"
#include "cdexp/oracle.hpp"
#include "cdexp/search.hpp"

namespace cdexp {

inline constexpr double kNatsToBits = 1.0 / std::numbers::ln2;

namespace cli_detail {

struct Common {
  std::string problem_path;
  bool bits = false;
  bool json = false;
  std::string record_path;
};

struct Session {
  ProblemFile file;
  bool bits = false;
  double scale = 1.0;  // nats -> output unit
  const char* unit = "nats";
  const Common* common = nullptr;
};

inline void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-p,--problem", c.problem_path, "problem file (JSON)")->required();
  cmd->add_flag("--bits", c.bits, "report information quantities in bits");
  cmd->add_flag("--json", c.json, "print the run record instead of the summary");
  cmd->add_option("--record", c.record_path, "also write the run record to this file");
}

inline Session open_session(const Common& c) {
  Session s{parse_problem(c.problem_path)};
  s.bits = c.bits || s.file.units == "bits";
  s.scale = s.bits ? kNatsToBits : 1.0;
  s.unit = s.bits ? "bits" : "nats";
  s.common = &c;
  return s;
}

inline RunRecord start_record(const std::string& command, const Session& s) {
  RunRecord rec;
  rec.command = command;
  rec.parameters["problem"] = s.file.basename;
  rec.parameters["problem_data"] = problem_to_json(s.file.problem);
  rec.parameters["units"] = s.unit;
  rec.timestamp = utc_timestamp();
  return rec;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CliError(ExitCode::usage, path + ": cannot open for writing");
  f << text;
}

/// Prints the record or the summary, writes --record, and maps convergence
/// to the exit code.
inline int finish(const RunRecord& rec, const Session& s, std::ostream& out,
                  const std::function<void(std::ostream&)>& summary, bool converged) {
  if (s.common->json) {
    out << serialize(rec);
  } else {
    summary(out);
  }
  if (!s.common->record_path.empty()) write_file(s.common->record_path, serialize(rec));
  return static_cast<int>(converged ? ExitCode::ok : ExitCode::not_converged);
}

inline void line(std::ostream& os, const std::string& key, const std::string& value) {
  os << key << ": " << value << "\n";
}

inline std::string yes_no(bool b) { return b ? "true" : "false"; }

inline SearchOptions search_options(double tol, std::size_t max_iters) {
  SearchOptions o;
  if (!(tol > 0.0)) throw CliError(ExitCode::usage, "--tol must be positive");
  o.inner_tol = tol;
  o.inner_tol_loose = std::max(o.inner_tol_loose, tol);
  o.max_iters = max_iters;
  return o;
}

inline std::vector<std::string> trace_row(const TraceRow& r, double scale) {
  return {std::to_string(r.t), format_number(r.objective * scale), format_number(r.minus_log_lambda * scale),
          format_number(r.step_kl * scale)};
}

inline const std::vector<std::string> kTraceHeader{"t", "objective", "minus_log_lambda", "step_kl"};

inline std::string trace_csv(const IterationTrace& trace, double scale) {
  std::ostringstream os;
  write_csv_row(os, kTraceHeader);
  for (const auto& r : trace) write_csv_row(os, trace_row(r, scale));
  return os.str();
}

inline ordered_json search_diagnostics(const SearchDiagnostics& d) {
  ordered_json j;
  j["evaluations"] = d.evaluations;
  j["bracket_expansions"] = d.bracket_expansions;
  j["unconverged_evaluations"] = d.unconverged_evaluations;
  j["mu_at_cap"] = d.mu_at_cap;
  j["converged"] = d.all_converged;
  return j;
}

// --- commands --------------------------------------------------------------

struct ExponentArgs {
  double rate = 0.0, delta = 0.0, tol = 1e-10;
  std::size_t max_iters = 100000;
  std::string trace_path;
};

inline int cmd_exponent(const Session& s, const ExponentArgs& a, std::ostream& out) {
  const OperatingPoint point(a.rate, a.delta);
  const auto res = exponent(s.file.problem, point, search_options(a.tol, a.max_iters));

  auto rec = start_record("exponent", s);
  rec.parameters["rate"] = round12(a.rate);
  rec.parameters["delta"] = round12(a.delta);
  rec.parameters["tol"] = round12(a.tol);
  rec.parameters["max_iters"] = a.max_iters;
  rec.results["value"] = json_number(res.value * s.scale);
  rec.results["lambda_star"] = json_number(res.lambda_star);
  rec.results["mu_star"] = json_number(res.mu_star);
  rec.results["flags"] = {{"converged", res.diagnostics.all_converged}, {"mu_at_cap", res.diagnostics.mu_at_cap}};
  rec.diagnostics = search_diagnostics(res.diagnostics);
  rec.diagnostics["iterations"] = res.inner.iterations;
  rec.diagnostics["clamp_events"] = res.inner.clamp_events;

  if (!a.trace_path.empty()) write_file(a.trace_path, trace_csv(res.inner.trace, s.scale));
  return finish(rec, s, out, [&](std::ostream& os) {
    line(os, "exponent", format_number(res.value * s.scale) + " " + s.unit);
    line(os, "lambda*", format_number(res.lambda_star));
    line(os, "mu*", format_number(res.mu_star));
    line(os, "converged", yes_no(res.diagnostics.all_converged));
    if (res.diagnostics.mu_at_cap) line(os, "warning", "mu reached the search cap");
  }, res.diagnostics.all_converged);
}

struct CutoffArgs {
  double delta = 0.0;
  std::vector<double> lambdas;
};

inline int cmd_cutoff(const Session& s, const CutoffArgs& a, std::ostream& out) {
  for (double l : a.lambdas) {
    if (!(l > 0.0 && l <= 1.0)) throw CliError(ExitCode::usage, "--lambda must lie in (0, 1]; got " + format_number(l));
  }
  auto rec = start_record("cutoff", s);
  rec.parameters["delta"] = round12(a.delta);
  rec.parameters["lambda"] = ordered_json::array();
  for (double l : a.lambdas) rec.parameters["lambda"].push_back(round12(l));

  SearchDiagnostics all;
  std::vector<CutoffResult> rows;
  for (double l : a.lambdas) {
    rows.push_back(cutoff_rate(s.file.problem, a.delta, l));
    all.merge(rows.back().diagnostics);
  }
  // Larger lambda must not give a larger cutoff rate.
  bool monotone = true;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j)
      if (rows[i].lambda < rows[j].lambda && rows[j].value > rows[i].value + 1e-4) monotone = false;

  rec.results["rows"] = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json row;
    row["lambda"] = round12(r.lambda);
    row["value"] = json_number(r.value * s.scale);
    row["mu_star"] = json_number(r.mu_star);
    row["mu_at_cap"] = r.diagnostics.mu_at_cap;
    rec.results["rows"].push_back(row);
  }
  rec.results["nonincreasing_in_lambda"] = monotone;
  rec.diagnostics = search_diagnostics(all);

  return finish(rec, s, out, [&](std::ostream& os) {
    for (const auto& r : rows) {
      line(os, "cutoff(lambda=" + format_number(r.lambda) + ")", format_number(r.value * s.scale) + " " + s.unit +
                                                                   "  mu*=" + format_number(r.mu_star));
    }
    if (rows.size() > 1) line(os, "check", std::string("nonincreasing in lambda: ") + (monotone ? "yes" : "NO"));
    line(os, "converged", yes_no(all.all_converged));
  }, all.all_converged);
}

struct RdArgs {
  std::vector<double> deltas;
  std::vector<double> sweep;  // start stop step
  double lambda = 1e-3;
  unsigned jobs = 1;
  std::string out_path;
};

inline std::vector<double> sweep_points(const RdArgs& a) {
  std::vector<double> d = a.deltas;
  if (!a.sweep.empty()) {
    const double start = a.sweep[0], stop = a.sweep[1], step = a.sweep[2];
    if (!(step > 0.0)) throw CliError(ExitCode::usage, "--sweep step must be positive");
    for (long i = 0; start + static_cast<double>(i) * step <= stop + 1e-9 * step; ++i) {
      d.push_back(round12(start + static_cast<double>(i) * step));
    }
  }
  if (d.empty()) throw CliError(ExitCode::usage, "rd: the distortion sweep is empty");
  return d;
}

struct RdRow {
  double delta = 0.0;
  RdApproxResult approx;
  double ba = 0.0;
};

inline int cmd_rd(const Session& s, const RdArgs& a, std::ostream& out, std::ostream& err) {
  const auto deltas = sweep_points(a);
  if (!(a.lambda > 0.0 && a.lambda <= 1.0)) throw CliError(ExitCode::usage, "--lambda must lie in (0, 1]");
  const auto& problem = s.file.problem;
  const double cap = rd_certified_lambda_cap(problem);
  if (a.lambda > cap) {
    err << "warning: lambda " << format_number(a.lambda) << " exceeds " << format_number(cap)
        << "; the bound is not certified\n";
  }

  // Points are independent; workers pull indices and results land by index.
  std::vector<RdRow> rows(deltas.size());
  std::vector<std::exception_ptr> errors(deltas.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < deltas.size(); i = next++) {
      try {
        rows[i].delta = deltas[i];
        rows[i].approx = rd_approx(problem, deltas[i], a.lambda);
        rows[i].ba = ba_rate_distortion(problem, deltas[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(a.jobs, static_cast<unsigned>(deltas.size())));
  if (jobs == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  auto rec = start_record("rd", s);
  rec.parameters["delta"] = ordered_json::array();
  for (double d : deltas) rec.parameters["delta"].push_back(round12(d));
  rec.parameters["lambda"] = round12(a.lambda);
  rec.results["lambda_cap"] = json_number(cap);
  rec.results["rows"] = ordered_json::array();

  const std::vector<std::string> header{"delta", "rd_approx", "certified_bound", "ba_reference", "certified", "flags"};
  std::vector<std::vector<std::string>> csv;
  SearchDiagnostics all;
  for (const auto& r : rows) {
    const auto& d = r.approx.cutoff.diagnostics;
    all.merge(d);
    std::string flags;
    if (d.mu_at_cap) flags = "mu_at_cap";
    if (!d.all_converged) flags += flags.empty() ? "not_converged" : ";not_converged";
    csv.push_back({format_number(r.delta), format_number(r.approx.approx * s.scale),
                   format_number(r.approx.bound * s.scale), format_number(r.ba * s.scale),
                   yes_no(r.approx.certified), flags});
    ordered_json row;
    row["delta"] = round12(r.delta);
    row["rd_approx"] = json_number(r.approx.approx * s.scale);
    row["certified_bound"] = json_number(r.approx.bound * s.scale);
    row["ba_reference"] = json_number(r.ba * s.scale);
    row["certified"] = r.approx.certified;
    row["mu_star"] = json_number(r.approx.cutoff.mu_star);
    row["c2"] = json_number(r.approx.c2);
    row["mu_at_cap"] = d.mu_at_cap;
    row["converged"] = d.all_converged;
    rec.results["rows"].push_back(row);
  }
  rec.diagnostics = search_diagnostics(all);

  std::ostringstream table;
  write_csv(table, header, csv);
  if (!a.out_path.empty()) write_file(a.out_path, table.str());
  return finish(rec, s, out, [&](std::ostream& os) { os << table.str(); }, all.all_converged);
}

struct TraceArgs {
  double mu = 0.0, lambda = 0.0, tol = 1e-10;
  std::size_t max_iters = 100000;
  std::string out_path;
};

inline int cmd_trace(const Session& s, const TraceArgs& a, std::ostream& out) {
  SolveOptions so;
  so.tol = a.tol;
  so.max_iters = a.max_iters;
  const auto report = solve_omega(s.file.problem, TiltParams(a.mu, a.lambda), so);
  const auto check = verify_convergence(report);

  auto rec = start_record("trace", s);
  rec.parameters["mu"] = round12(a.mu);
  rec.parameters["lambda"] = round12(a.lambda);
  rec.parameters["tol"] = round12(a.tol);
  rec.parameters["max_iters"] = a.max_iters;
  rec.results["omega"] = json_number(report.omega_value * s.scale);
  rec.results["omega_lower"] = json_number(report.omega_lower * s.scale);
  rec.results["final_minus_log_lambda"] =
      json_number(report.trace.empty() ? report.omega_value * s.scale : report.trace.back().minus_log_lambda * s.scale);
  rec.results["rows"] = report.trace.size();
  rec.results["flags"] = {{"converged", report.converged}, {"monotone_chain", check.monotone_chain}};
  rec.diagnostics["iterations"] = report.iterations;
  rec.diagnostics["converged"] = report.converged;
  rec.diagnostics["clamp_events"] = report.clamp_events;
  rec.diagnostics["worst_chain_violation"] = json_number(check.worst_chain_violation);

  const auto table = trace_csv(report.trace, s.scale);
  if (!a.out_path.empty()) write_file(a.out_path, table);
  return finish(rec, s, out, [&](std::ostream& os) { os << table; }, report.converged);
}

struct OracleArgs {
  std::string kind;
  std::optional<double> rate, delta, mu, lambda, slack;
  std::optional<double> step;
};

inline double need(const std::optional<double>& v, const char* flag, const std::string& kind) {
  if (!v) throw CliError(ExitCode::usage, "oracle " + kind + " requires " + flag);
  return *v;
}

inline int cmd_oracle(const Session& s, const OracleArgs& a, std::ostream& out) {
  const auto& problem = s.file.problem;
  auto rec = start_record("oracle", s);
  rec.parameters["oracle"] = a.kind;
  double value = 0.0;

  auto grid = [&](double default_step) {
    GridSpec g{a.step.value_or(default_step), a.slack};
    rec.parameters["step"] = round12(g.step);
    if (a.slack) rec.parameters["slack"] = round12(*a.slack);
    return g;
  };

  if (a.kind == "ba" || a.kind == "analytic") {
    const double delta = need(a.delta, "--delta", a.kind);
    rec.parameters["delta"] = round12(delta);
    if (a.kind == "ba") {
      value = ba_rate_distortion(problem, delta);
    } else {
      if (!oracle_detail::is_binary_hamming(problem.distortion)) {
        throw CliError(ExitCode::usage, "oracle analytic needs a binary source with Hamming distortion");
      }
      value = analytic_binary_hamming_rd(problem.source[0], delta);
    }
  } else if (a.kind == "grid_gck" || a.kind == "grid_joint") {
    const OperatingPoint point(need(a.rate, "--rate", a.kind), need(a.delta, "--delta", a.kind));
    rec.parameters["rate"] = round12(point.rate);
    rec.parameters["delta"] = round12(point.delta);
    value = a.kind == "grid_gck" ? grid_gck(problem, point, grid(1e-4)) : grid_joint_g(problem, point, grid(5e-3));
  } else {
    const double mu = need(a.mu, "--mu", a.kind), lambda = need(a.lambda, "--lambda", a.kind);
    rec.parameters["mu"] = round12(mu);
    rec.parameters["lambda"] = round12(lambda);
    value = grid_omega(problem, mu, lambda, grid(5e-3));
  }

  rec.results["value"] = json_number(value * s.scale);
  return finish(rec, s, out, [&](std::ostream& os) { line(os, a.kind, format_number(value * s.scale) + " " + s.unit); },
                true);
}

}  // namespace cli_detail

/// Entry point shared by the executable and the tests. Returns the exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;
  CLI::App app{"Correct-decoding exponent solver for lossy source coding"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CDEXP_VERSION);

  Common common;

  ExponentArgs ea;
  auto* exp_cmd = app.add_subcommand("exponent", "optimal exponent G(R, delta)");
  add_common(exp_cmd, common);
  exp_cmd->add_option("-R,--rate", ea.rate, "rate in nats")->required()->check(CLI::NonNegativeNumber);
  exp_cmd->add_option("-D,--delta", ea.delta, "distortion level")->required()->check(CLI::NonNegativeNumber);
  exp_cmd->add_option("--tol", ea.tol, "inner iteration tolerance")->capture_default_str();
  exp_cmd->add_option("--max-iters", ea.max_iters, "inner iteration cap")->capture_default_str();
  exp_cmd->add_option("--trace", ea.trace_path, "write the iteration trace at the maximizer as CSV");

  CutoffArgs ca;
  auto* cut_cmd = app.add_subcommand("cutoff", "cutoff rate R_cut(lambda)(delta)");
  add_common(cut_cmd, common);
  cut_cmd->add_option("-D,--delta", ca.delta, "distortion level")->required()->check(CLI::NonNegativeNumber);
  cut_cmd->add_option("-l,--lambda", ca.lambdas, "lambda in (0, 1]; repeat or comma-separate")
      ->required()
      ->delimiter(',');

  RdArgs ra;
  auto* rd_cmd = app.add_subcommand("rd", "rate-distortion approximation over a distortion sweep");
  add_common(rd_cmd, common);
  rd_cmd->add_option("--deltas", ra.deltas, "distortion levels, comma-separated")->delimiter(',');
  rd_cmd->add_option("--sweep", ra.sweep, "START STOP STEP")->expected(3);
  rd_cmd->add_option("-l,--lambda", ra.lambda, "cutoff parameter")->capture_default_str();
  rd_cmd->add_option("-j,--jobs", ra.jobs, "worker threads")->capture_default_str();
  rd_cmd->add_option("-o,--out", ra.out_path, "also write the CSV to this file");

  TraceArgs ta;
  auto* tr_cmd = app.add_subcommand("trace", "per-iteration trace of the updating algorithm");
  add_common(tr_cmd, common);
  tr_cmd->add_option("--mu", ta.mu, "mu >= 0")->required();
  tr_cmd->add_option("-l,--lambda", ta.lambda, "lambda in [0, 1]")->required();
  tr_cmd->add_option("--tol", ta.tol, "iteration tolerance")->capture_default_str();
  tr_cmd->add_option("--max-iters", ta.max_iters, "iteration cap")->capture_default_str();
  tr_cmd->add_option("-o,--out", ta.out_path, "also write the CSV to this file");

  OracleArgs oa;
  auto* or_cmd = app.add_subcommand("oracle", "reference computations");
  add_common(or_cmd, common);
  or_cmd->add_option("kind", oa.kind, "ba | analytic | grid_gck | grid_joint | grid_omega")
      ->required()
      ->check(CLI::IsMember({"ba", "analytic", "grid_gck", "grid_joint", "grid_omega"}));
  or_cmd->add_option("-R,--rate", oa.rate, "rate in nats");
  or_cmd->add_option("-D,--delta", oa.delta, "distortion level");
  or_cmd->add_option("--mu", oa.mu, "mu");
  or_cmd->add_option("-l,--lambda", oa.lambda, "lambda");
  or_cmd->add_option("--step", oa.step, "grid step");
  or_cmd->add_option("--slack", oa.slack, "distortion feasibility slack (grid_joint)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    const auto session = open_session(common);
    if (*exp_cmd) return cmd_exponent(session, ea, out);
    if (*cut_cmd) return cmd_cutoff(session, ca, out);
    if (*rd_cmd) return cmd_rd(session, ra, out, err);
    if (*tr_cmd) return cmd_trace(session, ta, out);
    return cmd_oracle(session, oa, out);
  } catch (const CliError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::validation);
  } catch (const SupportError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::validation);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::usage);
  }
}

}  // namespace cdexp
