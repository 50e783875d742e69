#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oracle/golden.hpp"
#include "spiral/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

Invocation run(std::vector<std::string> args) {
  args.insert(args.begin(), "spiral");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = spiral::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::vector<double>> parse_csv(const std::string& text, std::string* header = nullptr) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell == "nan" ? std::nan("") : std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("spiral_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name())) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, SolveReference) {
  const Invocation r = run({"solve", "--l0", "0", "--g", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["case"], "RotatingGrowing");
  EXPECT_NEAR(j["omega"].get<double>(), golden::kOmegaRef, 1e-7);
  EXPECT_EQ(j["crossing_count"], 0);
  EXPECT_EQ(j["forward_outcome"], "Decays");
  EXPECT_LT(j["residual_integral"].get<double>(), 1e-8);
  EXPECT_TRUE(j["feasible_window"][0].is_null());
  // Keys keep insertion order.
  EXPECT_LT(r.out.find("\"case\""), r.out.find("\"omega\""));
}

TEST(Cli, SolveNoSolutionExitCode) {
  const Invocation r = run({"solve", "--l0", "0", "--g", "-1"});
  EXPECT_EQ(r.code, spiral::cli::kNoSolution);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["case"], "NoSolution");
  EXPECT_TRUE(j["feasible_window"].is_null());
  EXPECT_FALSE(j["message"].get<std::string>().empty());
}

TEST(Cli, SolveNonrotating) {
  const Invocation r = run({"solve", "--kappa0", "2.5", "--g", "0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["case"], "Nonrotating");
  EXPECT_EQ(j["omega"], 0.0);
  EXPECT_EQ(j["crossing_count"], 1);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, spiral::cli::kUsage);
  EXPECT_EQ(run({"solve"}).code, spiral::cli::kUsage);
  EXPECT_EQ(run({"solve", "--l0", "0", "--kappa0", "1"}).code, spiral::cli::kUsage);
  EXPECT_EQ(run({"solve", "--l0", "0", "--v0", "-1"}).code, spiral::cli::kUsage);
  EXPECT_EQ(run({"bogus"}).code, spiral::cli::kUsage);
  EXPECT_EQ(run({"separatrix"}).code, spiral::cli::kUsage);
  EXPECT_EQ(run({"help-me", "--nope"}).code, spiral::cli::kUsage);
  for (const char* cmd : {"solve", "separatrix", "ladder", "classify"}) {
    EXPECT_EQ(run({cmd, "--l0", "0", "--omega", "-0.5"}).code, spiral::cli::kUsage) << cmd;
  }
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, SeparatrixCsvAndSummary) {
  const Invocation r = run({"separatrix", "--omega", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::string header;
  const auto rows = parse_csv(r.out, &header);
  EXPECT_EQ(header, "s,l,v,E");
  ASSERT_GT(rows.size(), 10u);
  EXPECT_NEAR(rows.front()[1], golden::kLStar1, golden::kLTol);
  for (const auto& row : rows) EXPECT_LT(row[3], 0.0);

  TempDir dir;
  const Invocation f = run({"separatrix", "--omega", "1", "--out", dir.file("tail.csv")});
  ASSERT_EQ(f.code, 0);
  const auto j = nlohmann::json::parse(f.out);
  EXPECT_NEAR(j["l_star"].get<double>(), golden::kLStar1, golden::kLTol);
  EXPECT_EQ(slurp(dir.file("tail.csv")), r.out);
}

TEST(Cli, SeparatrixUnresolvable) {
  EXPECT_EQ(run({"separatrix", "--omega", "1.999"}).code, spiral::cli::kNoSolution);
  EXPECT_EQ(run({"separatrix", "--omega", "2"}).code, spiral::cli::kUsage);
}

TEST(Cli, Ladder) {
  const Invocation r = run({"ladder", "--omega", "0.5", "--max-index", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::string header;
  const auto rows = parse_csv(r.out, &header);
  EXPECT_EQ(header, "index,l_iR,l_iL");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NEAR(rows[0][1], golden::kLStar05, golden::kLTol);
  EXPECT_NEAR(rows[1][1], 0.03192, 1e-4);
  EXPECT_EQ(run({"ladder", "--omega", "1.9", "--max-index", "6"}).code, spiral::cli::kNumerical);
}

TEST(Cli, SweepIsDeterministicAcrossThreadCounts) {
  const std::vector<std::string> base = {"sweep", "--omega-min", "0.2", "--omega-max", "1.8", "--samples", "9"};
  auto with = [&](const char* threads) {
    auto args = base;
    args.insert(args.end(), {"--threads", threads});
    return run(args);
  };
  const Invocation one = with("1"), four = with("4");
  ASSERT_EQ(one.code, 0);
  EXPECT_EQ(one.out, four.out);
  const auto rows = parse_csv(one.out);
  ASSERT_EQ(rows.size(), 9u);
  for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_LT(rows[k][1], rows[k - 1][1]);
  EXPECT_EQ(run({"sweep", "--omega-min", "1", "--omega-max", "0.5"}).code, spiral::cli::kUsage);
}

TEST(Cli, Classify) {
  const Invocation r = run({"classify", "--omega", "1", "--l", "0.01", "--v", "0"});
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["outcome"], "Returns");
  EXPECT_LT(std::abs(j["v_event"].get<double>()), 1e-9);
  const auto esc = nlohmann::json::parse(run({"classify", "--omega", "1", "--l", "0.1"}).out);
  EXPECT_EQ(esc["outcome"], "Escapes");
}

TEST(Cli, TipPathOnCircle) {
  const Invocation r = run({"tip", "--l0", "-0.5", "--samples", "101"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 101u);
  double cx = 0.0, cy = 0.0;
  for (const auto& row : rows) {
    cx += row[1];
    cy += row[2];
  }
  cx /= rows.size() - 1;
  cy /= rows.size() - 1;
  // The first and last rows coincide, so the mean of the rest is the centre.
  cx -= rows.back()[1] / (rows.size() - 1);
  cy -= rows.back()[2] / (rows.size() - 1);
  const double r0 = std::hypot(rows[0][1] - cx, rows[0][2] - cy);
  EXPECT_NEAR(r0, 1.6725, 1e-3);
  for (const auto& row : rows) EXPECT_NEAR(std::hypot(row[1] - cx, row[2] - cy), r0, 1e-9);
}

TEST(Cli, TraceCircumcircleMatchesCurvature) {
  TempDir dir;
  const Invocation r = run({"trace", "--l0", "0", "--s-max", "100", "--samples", "1001", "--svg", dir.file("front.svg")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::string header;
  const auto rows = parse_csv(r.out, &header);
  EXPECT_EQ(header, "s,kappa,theta,x,y");
  ASSERT_EQ(rows.size(), 1001u);
  int checked = 0;
  for (std::size_t k = 10; k + 10 < rows.size(); ++k) {
    const auto &a = rows[k - 1], &b = rows[k], &c = rows[k + 1];
    const double ab = std::hypot(b[3] - a[3], b[4] - a[4]), bc = std::hypot(c[3] - b[3], c[4] - b[4]);
    const double ca = std::hypot(a[3] - c[3], a[4] - c[4]);
    const double cross = (b[3] - a[3]) * (c[4] - a[4]) - (b[4] - a[4]) * (c[3] - a[3]);
    const double kappa = -2.0 * cross / (ab * bc * ca);
    EXPECT_NEAR(kappa, b[1], 0.01 * std::abs(b[1])) << "s = " << b[0];
    ++checked;
  }
  EXPECT_GT(checked, 900);
  const std::string svg = slurp(dir.file("front.svg"));
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
}

TEST(Cli, ConfigFileWithOverride) {
  TempDir dir;
  {
    std::ofstream cfg(dir.file("run.ini"));
    cfg << "l0 = 0\ng = -1\n";
  }
  EXPECT_EQ(run({"solve", "--config", dir.file("run.ini")}).code, spiral::cli::kNoSolution);
  const Invocation r = run({"solve", "--config", dir.file("run.ini"), "--g", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(nlohmann::json::parse(r.out)["omega"].get<double>(), golden::kOmegaRef, 1e-7);
}

TEST(Cli, KappaZeroMatchesLogCurvature) {
  const Invocation a = run({"solve", "--kappa0", "1", "--g", "0.1"});
  const Invocation b = run({"solve", "--l0", "0", "--g", "0.1"});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST(Cli, OutputIsDeterministic) {
  const Invocation a = run({"trace", "--l0", "-0.5", "--s-max", "20", "--samples", "51", "--t", "1.5"});
  const Invocation b = run({"trace", "--l0", "-0.5", "--s-max", "20", "--samples", "51", "--t", "1.5"});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
}
