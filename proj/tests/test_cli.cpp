// SPDX-License-Identifier: Apache-2.0
//
// Runs the mlot binary as a subprocess and checks exit codes and outputs.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "mlot/io.hpp"
#include "test_support.hpp"

#ifndef MLOT_CLI_PATH
#error "MLOT_CLI_PATH must point at the mlot executable"
#endif

namespace {

namespace fs = std::filesystem;
using namespace mlot;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mlot_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path file(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }
  fs::path path(const std::string& name) const { return dir_ / name; }

  // Exit status of `mlot <args>`; stdout and stderr land in out_ and err_.
  int run(const std::string& args) {
    const std::string cmd = std::string(MLOT_CLI_PATH) + " " + args + " >" +
                            (dir_ / "stdout").string() + " 2>" + (dir_ / "stderr").string();
    const int status = std::system(cmd.c_str());
    out_ = read_text_file(dir_ / "stdout");
    err_ = read_text_file(dir_ / "stderr");
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path dir_;
  std::string out_, err_;
};

const char* kPair = R"({"tokens": 2, "vocab": 3, "logits": [[2.0, 0.5, -1.0], [0.1, 3.0, 0.2]]})";

TEST_F(Cli, LossReportsAllFields) {
  const auto t = file("t.json", kPair);
  const auto s = file("s.json", R"({"tokens": 2, "vocab": 2, "logits": [[1, 0], [0, 1]]})");
  ASSERT_EQ(run("loss --teacher " + t.string() + " --student " + s.string()), 0) << err_;
  for (const char* key : {"ce ", "had ", "sl ", "sd ", "total ", "k_eff "})
    EXPECT_NE(out_.find(key), std::string::npos) << key;
  ASSERT_EQ(run("loss --json --teacher " + t.string() + " --student " + s.string()), 0);
  EXPECT_NE(out_.find("\"total\""), std::string::npos);
}

TEST_F(Cli, LossIdenticalModelsHadZero) {
  const auto t = file("t.json", kPair);
  const auto l = file("labels.txt", "0\n1\n");
  ASSERT_EQ(run("loss --teacher " + t.string() + " --student " + t.string() + " --labels " +
                l.string()),
            0)
      << err_;
  EXPECT_NE(out_.find("had    0.000000"), std::string::npos) << out_;
}

TEST_F(Cli, MalformedLogitFileExits2) {
  const auto t = file("t.json", kPair);
  const auto s = file("bad.json", "{\"tokens\": 1, \"vocab\": 2,\n \"logits\": [[NaN, 1]]}");
  EXPECT_EQ(run("loss --teacher " + t.string() + " --student " + s.string()), 2);
  EXPECT_NE(err_.find("bad.json:2"), std::string::npos) << err_;
}

TEST_F(Cli, BadConfigAndUsageExit2) {
  const auto t = file("t.json", kPair);
  const auto c = file("c.cfg", "alpha=0.1\nunknown=3\n");
  EXPECT_EQ(run("loss --teacher " + t.string() + " --student " + t.string() + " --config " +
                c.string()),
            2);
  const auto neg = file("neg.cfg", "lambda=-1\n");
  EXPECT_EQ(run("loss --teacher " + t.string() + " --student " + t.string() + " --config " +
                neg.string()),
            2);
  EXPECT_EQ(run("loss --teacher " + t.string()), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, LabelCountMismatchExits3) {
  const auto t = file("t.json", kPair);
  const auto l = file("labels.txt", "0\n");
  EXPECT_EQ(run("loss --teacher " + t.string() + " --student " + t.string() + " --labels " +
                l.string()),
            3);
}

TEST_F(Cli, SinkhornZeroCost) {
  const auto c = file("c.csv", "0,0\n0,0\n");
  ASSERT_EQ(run("sinkhorn --cost " + c.string() + " --out " + path("p.csv").string()), 0) << err_;
  EXPECT_EQ(read_text_file(path("p.csv")), "0.5,0.5\n0.5,0.5\n");
  EXPECT_EQ(out_, "value 0\n");
}

TEST_F(Cli, SinkhornNearIdentityAndRoundTrip) {
  const auto c = file("c.csv", "0,1\n1,0\n");
  ASSERT_EQ(run("sinkhorn --cost " + c.string() + " --lambda 0.1 --iters 20 --out " +
                path("p.csv").string()),
            0);
  ASSERT_EQ(out_.rfind("value ", 0), 0u);
  EXPECT_LT(std::stod(out_.substr(6)), 1e-3);
  // the written plan is the in-process plan to within 1e-12
  SinkhornConfig cfg;
  const TransportPlan direct =
      sinkhorn_plan(CostMatrix(Matrix::from_rows({{0, 1}, {1, 0}})), cfg);
  const Matrix back = read_matrix_csv(path("p.csv"));
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(back.data()[i], direct.values().data()[i], 1e-12);
}

TEST_F(Cli, SinkhornNonSquareExits3) {
  const auto c = file("c.csv", "0,1,2\n1,0,2\n");
  EXPECT_EQ(run("sinkhorn --cost " + c.string() + " --out " + path("p.csv").string()), 3);
  EXPECT_FALSE(fs::exists(path("p.csv")));
}

TEST_F(Cli, SinkhornUnderflowExits4WithHint) {
  const auto c = file("c.csv", "1000,2000\n2000,1000\n");
  EXPECT_EQ(run("sinkhorn --cost " + c.string() + " --out " + path("p.csv").string()), 4);
  EXPECT_NE(err_.find("--lambda"), std::string::npos);
}

TEST_F(Cli, OracleExamples) {
  const auto c = file("c.csv", "0,1\n1,0\n");
  ASSERT_EQ(run("oracle --cost " + c.string()), 0);
  EXPECT_EQ(out_, "value 0\npermutation [0,1]\n");

  mlot::testing::Rng rng(81);
  const auto r = file("r.csv", format_matrix_csv(mlot::testing::random_matrix(rng, 5, 5)));
  ASSERT_EQ(run("oracle --method brute --cost " + r.string()), 0);
  const std::string brute = out_.substr(0, out_.find('\n'));
  ASSERT_EQ(run("oracle --method assign --cost " + r.string()), 0);
  EXPECT_EQ(out_.substr(0, out_.find('\n')), brute);

  const auto big = file("big.csv", format_matrix_csv(mlot::testing::random_matrix(rng, 8, 8)));
  EXPECT_EQ(run("oracle --method brute --cost " + big.string()), 3);
  EXPECT_EQ(run("oracle --method assign --cost " + big.string()), 0);
  EXPECT_EQ(run("oracle --method greedy --cost " + big.string()), 2);
}

TEST_F(Cli, DistillLinesAndDeterminism) {
  const auto c = file("d.cfg", "steps=3\n");
  ASSERT_EQ(run("distill --config " + c.string() + " --out " + path("a.csv").string()), 0) << err_;
  const std::string a = read_text_file(path("a.csv"));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 4);
  EXPECT_EQ(a.substr(0, a.find('\n')), "step,ce,had,sl,sd,total,eval_sd");
  ASSERT_EQ(run("distill --config " + c.string() + " --out " + path("b.csv").string()), 0);
  EXPECT_EQ(read_text_file(path("b.csv")), a);
}

TEST_F(Cli, DistillDefaultImprovesEvalSd) {
  ASSERT_EQ(run("distill --mode multilevel_ot --out " + path("m.csv").string()), 0) << err_;
  const Matrix m = parse_matrix_csv(
      [&] {
        std::string s = read_text_file(path("m.csv"));
        return s.substr(s.find('\n') + 1);
      }(),
      "m.csv");
  ASSERT_EQ(m.rows(), 500u);
  EXPECT_LT(m(499, 6), m(0, 6));
}

TEST_F(Cli, DistillDivergenceExits4WithPrefix) {
  const auto c = file("d.cfg", "lr=1e308\ntau_sl=0.25\nsteps=20\n");
  EXPECT_EQ(run("distill --config " + c.string() + " --out " + path("d.csv").string()), 4);
  const std::string d = read_text_file(path("d.csv"));
  EXPECT_EQ(d.substr(0, d.find('\n')), "step,ce,had,sl,sd,total,eval_sd");
  EXPECT_GE(std::count(d.begin(), d.end(), '\n'), 2);
}

}  // namespace
