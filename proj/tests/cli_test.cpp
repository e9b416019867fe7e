#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>

#include "mixedquant/model_io.hpp"
#include "support/temp_dir.hpp"

#ifndef MIXEDQUANT_CLI
#error "MIXEDQUANT_CLI must name the command-line binary"
#endif

namespace mixedquant {
namespace {

struct CliRun {
  int status = -1;
  std::string out;
};

CliRun run(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" MIXEDQUANT_CLI "' " + args + " 2>&1";
  CliRun r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir;
    const CliRun r = run("gen-fixture --samples 60 -o '" + root() + "'");
    ASSERT_EQ(r.status, 0) << r.out;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string root() { return dir_->path().string() + "/fx"; }
  static std::string model() { return "-m '" + root() + "/model'"; }
  static std::string data() { return "-d '" + root() + "/dataset.qds'"; }

  static testing::TempDir* dir_;
};
testing::TempDir* Cli::dir_ = nullptr;

TEST_F(Cli, MacVerifyDefault) {
  const CliRun r = run("mac-verify");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("65536/65536 exact"), std::string::npos) << r.out;
}

TEST_F(Cli, MacVerifyOtherFormats) {
  const CliRun r = run("mac-verify -a fixed:6f2 -w fixed:5f4");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("2048/2048 exact"), std::string::npos) << r.out;
}

TEST_F(Cli, Storage) {
  const CliRun a = run("storage");
  EXPECT_EQ(a.status, 0);
  EXPECT_NE(a.out.find("36.4%"), std::string::npos) << a.out;
  const CliRun b = run("storage -b fixed:8f7 -p float:3m3e+i -n 100");
  EXPECT_EQ(b.status, 0);
  EXPECT_NE(b.out.find("12.5%"), std::string::npos) << b.out;
  EXPECT_NE(b.out.find("100 bits saved"), std::string::npos) << b.out;
}

TEST_F(Cli, GenFixtureWritesChecksums) {
  const std::vector<std::byte> listing = read_file(root() + "/CHECKSUMS");
  EXPECT_EQ(std::string(reinterpret_cast<const char*>(listing.data()), listing.size()),
            checksum_listing(root(), "CHECKSUMS"));
}

TEST_F(Cli, GenFixtureIsDeterministic) {
  const std::string other = dir_->path().string() + "/fx2";
  ASSERT_EQ(run("gen-fixture --samples 60 -o '" + other + "'").status, 0);
  EXPECT_EQ(checksum_listing(other, "CHECKSUMS"), checksum_listing(root(), "CHECKSUMS"));
}

TEST_F(Cli, SeedFromEnvironment) {
  const std::string a = dir_->path().string() + "/env_a";
  const std::string b = dir_->path().string() + "/env_b";
  ASSERT_EQ(run("gen-fixture --samples 20 -o '" + a + "'", "MIXEDQUANT_SEED=7").status, 0);
  ASSERT_EQ(run("gen-fixture --samples 20 --seed 7 -o '" + b + "'").status, 0);
  EXPECT_EQ(checksum_listing(a, "CHECKSUMS"), checksum_listing(b, "CHECKSUMS"));
  EXPECT_EQ(run("storage", "MIXEDQUANT_SEED=notanumber").status, 2);
}

TEST_F(Cli, EvalReference) {
  const CliRun r = run("eval " + model() + " " + data() + " --reference");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("normalized 1.000000"), std::string::npos) << r.out;
}

TEST_F(Cli, QuantizeThenEval) {
  const std::string q = dir_->path().string() + "/q";
  ASSERT_EQ(run("quantize " + model() + " -f float:3m4e+i -o '" + q + "'").status, 0);
  const CliRun direct = run("eval " + model() + " " + data() + " -f float:3m4e+i");
  const CliRun stored = run("eval -m '" + q + "' " + data() + " -f float:3m4e+i");
  EXPECT_EQ(direct.status, 0);
  EXPECT_EQ(stored.status, 0);
  EXPECT_EQ(direct.out, stored.out);
}

TEST_F(Cli, SweepIsByteIdenticalAcrossRunsAndThreads) {
  const std::string args = "sweep " + model() + " " + data() + " -p fixed";
  const CliRun a = run(args);
  const CliRun b = run(args);
  const CliRun c = run(args + " --threads 3");
  ASSERT_EQ(a.status, 0) << a.out;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out, c.out);
  EXPECT_EQ(a.out.rfind("format,normalized_accuracy,saturation_count,zero_fraction\n", 0), 0u) << a.out;
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 12);
}

TEST_F(Cli, SweepJsonToFile) {
  const std::string out = dir_->path().string() + "/s.json";
  const CliRun r = run("sweep " + model() + " " + data() + " -f float:3m4e+i -f fixed:8f7 --json -o '" + out + "'");
  ASSERT_EQ(r.status, 0) << r.out;
  const std::vector<std::byte> bytes = read_file(out);
  const std::string s(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  EXPECT_NE(s.find("\"records\""), std::string::npos);
  EXPECT_NE(s.find("\"model_id\""), std::string::npos);
  EXPECT_NE(s.find("fixed:8f7"), std::string::npos);
}

TEST_F(Cli, Inspect) {
  const CliRun r = run("inspect " + model());
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("layer conv1"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("exponent histogram"), std::string::npos);
  EXPECT_NE(r.out.find("zero fraction fixed:4f3"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("no-such-command").status, 2);
  EXPECT_EQ(run("eval " + model() + " " + data() + " -f float:zz").status, 2);
  EXPECT_EQ(run("eval -m /nonexistent/model " + data() + " --reference").status, 3);
  EXPECT_EQ(run("eval " + model() + " -d /nonexistent/data.qds --reference").status, 3);
}

}  // namespace
}  // namespace mixedquant
