#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("duin_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) const {
    const auto log = dir_ / "log.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && '" DUIN_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenSyntheticIsByteIdentical) {
  ASSERT_EQ(run("gen-synthetic --sessions 500 --seed 1 --out a").code, 0);
  ASSERT_EQ(run("gen-synthetic --sessions 500 --seed 1 --out b").code, 0);
  for (const char* f : {"events.tsv", "users.tsv", "ground_truth.tsv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(dir_ / "a" / "config.resolved"));
  ASSERT_EQ(run("gen-synthetic --sessions 500 --seed 2 --out c").code, 0);
  EXPECT_NE(slurp(dir_ / "a" / "events.tsv"), slurp(dir_ / "c" / "events.tsv"));
}

TEST_F(Cli, UnknownConfigKeyIsUsageErrorListingKeys) {
  auto r = run("gen-synthetic --sessions 10 --set learning_rate=0.1");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("learning_rate"), std::string::npos);
  EXPECT_NE(r.out.find("valid keys"), std::string::npos);
  EXPECT_NE(r.out.find("graph_history"), std::string::npos);
}

TEST_F(Cli, BadArgumentsAndMissingFiles) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("train --bogus").code, 1);
  EXPECT_EQ(run("prepare --events missing.tsv --out p").code, 2);
  EXPECT_EQ(run("sweep --param tau --values ,").code, 1);
  EXPECT_EQ(run("sweep --param beta --values 0.1").code, 1);
}

TEST_F(Cli, ConfigFileIsAppliedAndSnapshotted) {
  {
    std::ofstream c(dir_ / "run.cfg");
    c << "# tiny\nwindow = 2\n";
  }
  ASSERT_EQ(run("gen-synthetic --sessions 400 --users 60 --items 100 --attributes 6 --out syn").code, 0);
  auto r = run("prepare --events syn/events.tsv --profiles syn/users.tsv --out data --config run.cfg");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(slurp(dir_ / "data" / "config.resolved").find("window = 2"), std::string::npos);
}

TEST_F(Cli, EndToEndTrainAndEval) {
  ASSERT_EQ(run("gen-synthetic --sessions 600 --users 80 --items 120 --attributes 8 --out syn").code, 0);
  auto p = run("prepare --events syn/events.tsv --profiles syn/users.tsv --out data");
  ASSERT_EQ(p.code, 0) << p.out;
  ASSERT_EQ(run("build-graph --data data").code, 0);
  const std::string small = " --set dim=4 --set heads=2 --set epochs=2 --set batch_size=32";
  auto t = run("train --data data --out ckpt" + small);
  ASSERT_EQ(t.code, 0) << t.out;
  for (const char* f : {"manifest.txt", "params.bin", "metrics.csv", "config.resolved", "items.vocab"}) {
    EXPECT_TRUE(fs::exists(dir_ / "ckpt" / f)) << f;
  }
  EXPECT_EQ(slurp(dir_ / "ckpt" / "metrics.csv").substr(0, 38), "epoch,step,l_ctr,l_ssl,l_final,val_auc");
  auto e = run("eval --checkpoint ckpt --data data/test.tsv");
  ASSERT_EQ(e.code, 0) << e.out;
  EXPECT_TRUE(std::regex_search(e.out, std::regex("AUC 0\\.[0-9]{4}\\n"))) << e.out;
  // A second eval reproduces the same number.
  EXPECT_EQ(run("eval --checkpoint ckpt --data data/test.tsv").out, e.out);
}

TEST_F(Cli, ReportReadsAblationCsv) {
  {
    std::ofstream c(dir_ / "ablation.csv");
    c << "model,variant,eiem,liem,iumm,ssl,sii,seeds,auc_mean,auc_std,relaimpr_pct,epoch_seconds,status,aucs\n"
      << "1,full,1,1,1,1,0,3,0.800000,0.010000,,1.00,ok,0.790000;0.800000;0.810000\n"
      << "2,no_liem,1,0,0,1,0,3,0.750000,0.010000,,1.00,ok,0.740000;0.750000;0.760000\n"
      << "3,trigger_agnostic,1,1,1,0,0,3,0.700000,0.010000,,1.00,ok,0.690000;0.700000;0.710000\n";
  }
  auto r = run("report --input ablation.csv --out report.csv --significance");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("no_liem"), std::string::npos);
  // 0.75 vs base 0.70: (0.25/0.2 - 1) * 100 = 25%.
  EXPECT_NE(slurp(dir_ / "report.csv").find("25.00"), std::string::npos);
  // Full separation at three seeds each: p = 1/20.
  EXPECT_NE(r.out.find("0.0500"), std::string::npos) << r.out;
}
