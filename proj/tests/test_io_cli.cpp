#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdexp/cli.hpp"
#include "cdexp/io.hpp"

using namespace cdexp;
namespace fs = std::filesystem;

namespace {

const std::string kSample = std::string(CDEXP_SOURCE_DIR) + "/data/binary_hamming.json";

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cdexp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_file(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("cdexp_test_" + name);
  std::ofstream(p) << text;
  return p;
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(ParseProblem, Sample) {
  const auto pf = parse_problem(kSample);
  EXPECT_EQ(pf.problem.x_size(), 2u);
  EXPECT_EQ(pf.problem.y_size(), 2u);
  EXPECT_EQ(pf.basename, "binary_hamming.json");
  EXPECT_EQ(pf.units, "nats");
}

TEST(ParseProblem, ErrorsCarryExitCodes) {
  auto code_of = [](const std::string& text) {
    try {
      parse_problem_text(text);
    } catch (const CliError& e) {
      return std::pair{static_cast<int>(e.code()), std::string(e.what())};
    }
    return std::pair{0, std::string()};
  };
  auto neg = code_of(R"({"source":[0.5,0.5],"distortion":[[0,1],[-1,0]]})");
  EXPECT_EQ(neg.first, 4);
  EXPECT_NE(neg.second.find("distortion[1][0]"), std::string::npos);
  EXPECT_EQ(code_of(R"({"source":[0.5,0.48],"distortion":[[0,1],[1,0]]})").first, 4);
  EXPECT_EQ(code_of(R"({"source":[0.5,0.5]})").first, 3);
  EXPECT_EQ(code_of(R"({"source":[0.5,"x"],"distortion":[[0,1],[1,0]]})").first, 3);
  EXPECT_EQ(code_of(R"({"source":[1],"distortion":[[0]],"colour":1})").first, 3);
  EXPECT_EQ(code_of(R"({"source":[1],"distortion":[[0]],"units":"furlongs"})").first, 3);
  EXPECT_EQ(code_of("[1,2").first, 3);
  try {
    parse_problem("/nonexistent/problem.json");
    FAIL();
  } catch (const CliError& e) {
    EXPECT_EQ(e.code(), ExitCode::file_missing);
  }
}

TEST(RunRecord, RoundTrip) {
  RunRecord r;
  r.command = "exponent";
  r.parameters["rate"] = round12(0.2);
  r.results["value"] = round12(0.16806420716849691);
  r.results["flags"] = {{"converged", true}};
  r.diagnostics["iterations"] = 123;
  r.timestamp = "2026-01-01T00:00:00Z";
  const auto text = serialize(r);
  EXPECT_EQ(deserialize(text), r);
  EXPECT_EQ(serialize(deserialize(text)), text);
  EXPECT_NE(text.find("0.168064207168"), std::string::npos);
}

TEST(Format, TwelveDigits) {
  EXPECT_EQ(format_number(0.36806420716849707), "0.368064207168");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(INFINITY), "inf");
  EXPECT_EQ(round12(1.0 / 3.0), 0.333333333333);
  EXPECT_TRUE(json_number(INFINITY).is_null());
}

TEST(Csv, QuotingAndLineEnds) {
  std::ostringstream os;
  write_csv(os, {"a", "b"}, {{"1", "x,y"}, {"say \"hi\"", ""}});
  EXPECT_EQ(os.str(), "a,b\r\n1,\"x,y\"\r\n\"say \"\"hi\"\"\",\r\n");
}

TEST(Cli, ExponentValues) {
  auto r = cli({"exponent", "-p", kSample, "-R", "0.4", "-D", "0.1", "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rec = deserialize(r.out);
  EXPECT_LE(rec.results["value"].get<double>(), 1e-4);

  r = cli({"exponent", "-p", kSample, "-R", "0.2", "-D", "0.1", "--json"});
  ASSERT_EQ(r.code, 0);
  rec = deserialize(r.out);
  EXPECT_NEAR(rec.results["value"].get<double>(), 0.1680642071684969, 1e-3);
  EXPECT_EQ(rec.parameters["problem"], "binary_hamming.json");

  r = cli({"exponent", "-p", kSample, "-R", "0.7", "-D", "1.0"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("exponent: 0 nats"), std::string::npos);
}

TEST(Cli, BitsScaleExactly) {
  const auto nats = deserialize(cli({"exponent", "-p", kSample, "-R", "0.2", "-D", "0.1", "--json"}).out);
  const auto bits = deserialize(cli({"exponent", "-p", kSample, "-R", "0.2", "-D", "0.1", "--json", "--bits"}).out);
  EXPECT_NEAR(bits.results["value"].get<double>(), nats.results["value"].get<double>() / std::log(2.0), 1e-11);
  EXPECT_EQ(bits.results["lambda_star"], nats.results["lambda_star"]);
  EXPECT_EQ(bits.results["mu_star"], nats.results["mu_star"]);
  EXPECT_EQ(bits.parameters["units"], "bits");
}

TEST(Cli, NonConvergenceStillPrints) {
  const auto skew = temp_file("skew_nc.json", R"({"source":[0.75,0.25],"distortion":[[0,1],[1,0]]})");
  auto r = cli({"exponent", "-p", skew.string(), "-R", "0.1", "-D", "0.1", "--max-iters", "20"});
  EXPECT_EQ(r.code, 5);
  EXPECT_NE(r.out.find("exponent: "), std::string::npos);
  EXPECT_NE(r.out.find("converged: false"), std::string::npos);
  r = cli({"trace", "-p", skew.string(), "--mu", "1", "-l", "0.5", "--max-iters", "3"});
  EXPECT_EQ(r.code, 5);
  EXPECT_EQ(read_csv(r.out).size(), 4u);
}

TEST(Cli, TraceFileWritten) {
  const auto path = fs::temp_directory_path() / "cdexp_test_trace.csv";
  fs::remove(path);
  ASSERT_EQ(cli({"exponent", "-p", kSample, "-R", "0.2", "-D", "0.1", "--trace", path.string()}).code, 0);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,objective,minus_log_lambda,step_kl\r");
}

TEST(Cli, CutoffChecks) {
  EXPECT_EQ(cli({"cutoff", "-p", kSample, "-D", "0.1", "-l", "0"}).code, 3);
  const auto r = cli({"cutoff", "-p", kSample, "-D", "0.1", "-l", "0.1,0.5", "--json"});
  ASSERT_EQ(r.code, 0);
  const auto rec = deserialize(r.out);
  EXPECT_TRUE(rec.results["nonincreasing_in_lambda"].get<bool>());
  EXPECT_GE(rec.results["rows"][0]["value"].get<double>(), rec.results["rows"][1]["value"].get<double>() - 1e-4);
  const auto top = cli({"cutoff", "-p", kSample, "-D", "1", "-l", "1", "--json"});
  EXPECT_EQ(deserialize(top.out).results["rows"][0]["value"].get<double>(), 0.0);
  const auto small = deserialize(cli({"cutoff", "-p", kSample, "-D", "0.1", "-l", "1e-3", "--json"}).out);
  const double v = small.results["rows"][0]["value"].get<double>();
  EXPECT_LE(v, 0.36806420716849707 + 1e-8);
  EXPECT_GE(v, 0.36806420716849707 - 0.1);
}

TEST(Cli, RdSweep) {
  EXPECT_EQ(cli({"rd", "-p", kSample, "--sweep", "0.5", "0.1", "0.05"}).code, 3);
  EXPECT_EQ(cli({"rd", "-p", kSample}).code, 3);
  const auto r = cli({"rd", "-p", kSample, "--deltas", "0,0.1,0.3", "-j", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_csv(r.out);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0][0], "delta");
  EXPECT_EQ(rows[1][0], "0");
  EXPECT_EQ(rows[1][5], "mu_at_cap");
  EXPECT_EQ(rows[2][0], "0.1");
  EXPECT_EQ(rows[3][0], "0.3");
  for (std::size_t i = 2; i < rows.size(); ++i) {
    const double approx = std::stod(rows[i][1]), bound = std::stod(rows[i][2]), ba = std::stod(rows[i][3]);
    EXPECT_LE(approx, ba + 1e-4);
    EXPECT_GE(approx, ba - bound);
  }
}

TEST(Cli, TraceCommand) {
  auto r = cli({"trace", "-p", kSample, "--mu", "0", "-l", "0.5"});
  ASSERT_EQ(r.code, 0);
  auto rows = read_csv(r.out);
  EXPECT_GE(rows.size(), 2u);
  EXPECT_LE(rows.size(), 3u);
  EXPECT_EQ(rows.back()[2], "0");

  const auto skew = temp_file("skew.json", R"({"source":[0.75,0.25],"distortion":[[0,1],[1,0]]})");
  r = cli({"trace", "-p", skew.string(), "--mu", "1", "-l", "0.5"});
  ASSERT_EQ(r.code, 0);
  rows = read_csv(r.out);
  for (std::size_t i = 2; i < rows.size(); ++i) {
    EXPECT_LE(std::stod(rows[i][2]), std::stod(rows[i - 1][2]) + 1e-10);
  }
  EXPECT_NEAR(std::stod(rows.back()[2]), std::stod(rows.back()[1]), 1e-9);
}

TEST(Cli, OracleCommand) {
  auto r = cli({"oracle", "ba", "-p", kSample, "-D", "0.1"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("0.368064207168"), std::string::npos);
  r = cli({"oracle", "grid_omega", "-p", kSample, "--mu", "0", "-l", "0.5"});
  EXPECT_NE(r.out.find("grid_omega: 0 nats"), std::string::npos);
  r = cli({"oracle", "grid_gck", "-p", kSample, "-R", "0.2", "-D", "0.1"});
  EXPECT_NE(r.out.find("0.168064207168"), std::string::npos);
  EXPECT_EQ(cli({"oracle", "grid_gck", "-p", kSample, "-D", "0.1"}).code, 3);
  EXPECT_EQ(cli({"oracle", "bogus", "-p", kSample}).code, 3);
  const auto big = temp_file("big.json", R"({"source":[0.25,0.25,0.25,0.25],
    "distortion":[[0,1,1,1],[1,0,1,1],[1,1,0,1],[1,1,1,0]]})");
  EXPECT_EQ(cli({"oracle", "grid_joint", "-p", big.string(), "-R", "0.1", "-D", "0.1"}).code, 3);
}

TEST(Cli, FileErrors) {
  EXPECT_EQ(cli({"exponent", "-p", "/nonexistent.json", "-R", "0.1", "-D", "0.1"}).code, 2);
  const auto bad = temp_file("neg.json", R"({"source":[0.5,0.5],"distortion":[[0,1],[-1,0]]})");
  const auto r = cli({"exponent", "-p", bad.string(), "-R", "0.1", "-D", "0.1"});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("distortion[1][0]"), std::string::npos);
  const auto sum = temp_file("sum.json", R"({"source":[0.5,0.48],"distortion":[[0,1],[1,0]]})");
  EXPECT_EQ(cli({"trace", "-p", sum.string(), "--mu", "1", "-l", "0.5"}).code, 4);
  EXPECT_EQ(cli({"exponent", "-p", kSample, "-R", "-1", "-D", "0.1"}).code, 3);
  EXPECT_EQ(cli({}).code, 3);
}

TEST(Cli, RecordFile) {
  const auto path = fs::temp_directory_path() / "cdexp_test_record.json";
  fs::remove(path);
  const auto r = cli({"oracle", "ba", "-p", kSample, "-D", "0.1", "--record", path.string()});
  ASSERT_EQ(r.code, 0);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto rec = deserialize(ss.str());
  EXPECT_EQ(rec.command, "oracle");
  EXPECT_EQ(rec.parameters["oracle"], "ba");
}
