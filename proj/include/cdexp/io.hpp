// Problem files, run records and CSV output.
//
// Problem file schema (JSON):
//
//   {
//     "source":     [0.5, 0.5],                 // P, sums to 1
//     "distortion": [[0, 1], [1, 0]],           // |X| rows, |Y| columns, >= 0
//     "labels_x":   ["0", "1"],                 // optional
//     "labels_y":   ["0", "1"],                 // optional
//     "units":      "nats"                      // optional: "nats" | "bits"
//   }
//
// Unknown keys are a schema error, so typos do not go unnoticed.
#pragma once

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdexp/prob.hpp"

#ifndef CDEXP_VERSION
#define CDEXP_VERSION "0.1.0"
#endif

namespace cdexp {

using ordered_json = nlohmann::ordered_json;

/// Process exit codes. Stable; documented in the README.
enum class ExitCode : int {
  ok = 0,
  file_missing = 2,
  usage = 3,          // bad arguments or malformed problem file
  validation = 4,     // well-formed file describing an invalid problem
  not_converged = 5,  // a result was printed, but some solve hit max_iters
};

class CliError : public std::runtime_error {
 public:
  CliError(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// ---------------------------------------------------------------------------
// Numbers

/// %.12g, with non-finite values spelled inf / -inf / nan.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // no "-0"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Rounds to 12 significant digits so that what is stored equals what is printed.
inline double round12(double v) {
  if (!std::isfinite(v)) return v;
  return std::strtod(format_number(v).c_str(), nullptr);
}

/// JSON has no infinities; they become null.
inline ordered_json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return round12(v);
}

// ---------------------------------------------------------------------------
// Problem files

struct ProblemFile {
  Problem problem;
  std::string units = "nats";
  std::string basename;
};

namespace io_detail {

inline std::vector<double> number_list(const ordered_json& j, const std::string& field) {
  if (!j.is_array()) throw CliError(ExitCode::usage, field + ": expected a list of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw CliError(ExitCode::usage, field + "[" + std::to_string(i) + "]: expected a number");
    }
    out.push_back(j[i].get<double>());
  }
  return out;
}

inline std::vector<std::string> string_list(const ordered_json& j, const std::string& field) {
  if (!j.is_array()) throw CliError(ExitCode::usage, field + ": expected a list of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) {
      throw CliError(ExitCode::usage, field + "[" + std::to_string(i) + "]: expected a string");
    }
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

}  // namespace io_detail

/// Parses problem-file text. `name` is used only in messages.
inline ProblemFile parse_problem_text(const std::string& text, const std::string& name = "problem") {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CliError(ExitCode::usage, name + ": not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw CliError(ExitCode::usage, name + ": top level must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "source" && key != "distortion" && key != "labels_x" && key != "labels_y" && key != "units") {
      throw CliError(ExitCode::usage, name + ": unknown field '" + key + "'");
    }
  }
  if (!j.contains("source")) throw CliError(ExitCode::usage, name + ": missing field 'source'");
  if (!j.contains("distortion")) throw CliError(ExitCode::usage, name + ": missing field 'distortion'");

  const auto source = io_detail::number_list(j["source"], "source");
  const auto& dj = j["distortion"];
  if (!dj.is_array()) throw CliError(ExitCode::usage, "distortion: expected a list of rows");
  std::vector<std::vector<double>> rows;
  for (std::size_t x = 0; x < dj.size(); ++x) {
    rows.push_back(io_detail::number_list(dj[x], "distortion[" + std::to_string(x) + "]"));
  }
  std::vector<std::string> lx, ly;
  if (j.contains("labels_x")) lx = io_detail::string_list(j["labels_x"], "labels_x");
  if (j.contains("labels_y")) ly = io_detail::string_list(j["labels_y"], "labels_y");

  std::string units = "nats";
  if (j.contains("units")) {
    if (!j["units"].is_string() || (j["units"] != "nats" && j["units"] != "bits")) {
      throw CliError(ExitCode::usage, "units: must be \"nats\" or \"bits\"");
    }
    units = j["units"].get<std::string>();
  }
  try {
    return ProblemFile{validate_problem(SourcePmf(source), DistortionTable::from_rows(rows), std::move(lx), std::move(ly)),
                       units, name};
  } catch (const ValidationError& e) {
    throw CliError(ExitCode::validation, name + ": " + e.what());
  }
}

inline ProblemFile parse_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CliError(ExitCode::file_missing, path.string() + ": cannot open problem file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem_text(ss.str(), path.filename().string());
}

inline ordered_json problem_to_json(const Problem& p) {
  ordered_json j;
  j["source"] = ordered_json::array();
  for (double v : p.source.probs()) j["source"].push_back(round12(v));
  j["distortion"] = ordered_json::array();
  for (std::size_t x = 0; x < p.x_size(); ++x) {
    ordered_json row = ordered_json::array();
    for (std::size_t y = 0; y < p.y_size(); ++y) row.push_back(round12(p.distortion.at(x, y)));
    j["distortion"].push_back(row);
  }
  if (!p.labels_x.empty()) j["labels_x"] = p.labels_x;
  if (!p.labels_y.empty()) j["labels_y"] = p.labels_y;
  return j;
}

// ---------------------------------------------------------------------------
// Run records

struct RunRecord {
  std::string command;
  ordered_json parameters = ordered_json::object();
  ordered_json results = ordered_json::object();
  ordered_json diagnostics = ordered_json::object();
  std::string timestamp;
  std::string version = CDEXP_VERSION;

  bool operator==(const RunRecord&) const = default;
};

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline ordered_json to_json(const RunRecord& r) {
  ordered_json j;
  j["command"] = r.command;
  j["parameters"] = r.parameters;
  j["results"] = r.results;
  j["diagnostics"] = r.diagnostics;
  j["timestamp"] = r.timestamp;
  j["version"] = r.version;
  return j;
}

inline RunRecord run_record_from_json(const ordered_json& j) {
  RunRecord r;
  try {
    r.command = j.at("command").get<std::string>();
    r.parameters = j.at("parameters");
    r.results = j.at("results");
    r.diagnostics = j.at("diagnostics");
    r.timestamp = j.at("timestamp").get<std::string>();
    r.version = j.at("version").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CliError(ExitCode::usage, std::string("run record: ") + e.what());
  }
  return r;
}

inline std::string serialize(const RunRecord& r) { return to_json(r).dump(2) + "\n"; }

inline RunRecord deserialize(const std::string& text) {
  try {
    return run_record_from_json(ordered_json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw CliError(ExitCode::usage, std::string("run record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180: CRLF line ends, fields quoted only when needed)

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << csv_field(fields[i]);
  }
  os << "\r\n";
}

inline void write_csv(std::ostream& os, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  write_csv_row(os, header);
  for (const auto& r : rows) write_csv_row(os, r);
}

}  // namespace cdexp
