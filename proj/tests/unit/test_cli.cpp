#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "fpnp/io.hpp"
#include "test_util.hpp"

namespace fpnp {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run_cli(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt";
  const auto err = scratch / "stderr.txt";
  const std::string cmd = std::string(FPNP_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// A few seconds of work end to end.
std::string tiny(const fs::path& out_dir) {
  return std::string("--config ") + FPNP_DESK_CONFIG + " output.dir=" + out_dir.string() +
         " dataset.count=10 dataset.size=16 prior.blocks=2 prior.features=4 solver.iterations=2"
         " training.epochs=1 prior.spectral_warmup=5";
}

bool single_error_line(const std::string& err, const std::string& category) {
  const std::string prefix = "error: " + category + ": ";
  return err.rfind(prefix, 0) == 0 && err.find('\n') == err.size() - 1;
}

TEST(Cli, MakeConfigRoundTrips) {
  testing::TempDir dir("cli");
  ASSERT_EQ(run_cli("make-config -o " + (dir / "a.yaml").string(), dir.path()).code, 0);
  ASSERT_EQ(run_cli("make-config -c " + (dir / "a.yaml").string() + " -o " + (dir / "b.yaml").string(),
                    dir.path()).code, 0);
  EXPECT_EQ(slurp(dir / "a.yaml"), slurp(dir / "b.yaml"));
  const auto r = run_cli(std::string("make-config -c ") + FPNP_DESK_CONFIG, dir.path());
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, slurp(FPNP_DESK_CONFIG));
}

TEST(Cli, FlagStyleOverridesMatchPositional) {
  testing::TempDir dir("cli");
  const auto a = run_cli("make-config --solver.iterations=4 --operator.pattern spiral", dir.path());
  const auto b = run_cli("make-config solver.iterations=4 operator.pattern=spiral", dir.path());
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("iterations: 4"), std::string::npos);
}

TEST(Cli, InvalidConfigNamesKey) {
  testing::TempDir dir("cli");
  auto r = run_cli("make-config solver.iterashuns=3", dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(single_error_line(r.err, "invalid_config")) << r.err;
  EXPECT_NE(r.err.find("solver.iterashuns"), std::string::npos);
  r = run_cli("make-config solver.gamma=-2", dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("solver.gamma"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  testing::TempDir dir("cli");
  auto r = run_cli("", dir.path());
  EXPECT_NE(r.code, 0);
  EXPECT_TRUE(single_error_line(r.err, "usage")) << r.err;
  r = run_cli("frobnicate", dir.path());
  EXPECT_NE(r.code, 0);
  r = run_cli("reconstruct", dir.path());
  EXPECT_NE(r.code, 0);
}

TEST(Cli, TrainAdaptReconstructEvaluate) {
  testing::TempDir dir("cli");
  const auto run_dir = dir / "run";
  const std::string cfg = tiny(run_dir);

  auto r = run_cli("train-base " + cfg, dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"backbone.ckpt", "config.yaml", "train_state.bin", "manifests/source.tsv",
                        "logs/train_base.tsv", "reports/train_base.json", "registry/index.json"}) {
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  }
  r = run_cli("train-base " + cfg, dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(single_error_line(r.err, "invalid_argument")) << r.err;
  r = run_cli("train-base --resume " + cfg + " training.epochs=2", dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resuming after epoch 1"), std::string::npos);

  r = run_cli("adapt --domain noise_20db " + cfg, dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(run_dir / "registry" / "noise_20db.mod"));
  r = run_cli("adapt --domain ct_like " + cfg, dir.path());
  ASSERT_EQ(r.code, 0) << r.err;

  write_pgm(testing::random_image({1, 24, 20}, 3), dir / "x.pgm");
  const std::string img = " --image " + (dir / "x.pgm").string();
  r = run_cli("reconstruct " + cfg + img + " --out " + (dir / "plain").string(), dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto plain = nlohmann::json::parse(slurp(dir / "plain" / "reconstruct.json"));
  EXPECT_EQ(plain["modulation"], "unmodulated");
  EXPECT_NE(plain["note"].get<std::string>().find("unmodulated"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "plain" / "reconstruction.pgm"));

  // Same operator and noise, modulation switched on.
  r = run_cli("reconstruct " + cfg + img + " --domain ct_like --out " + (dir / "mod").string(), dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto mod = nlohmann::json::parse(slurp(dir / "mod" / "reconstruct.json"));
  EXPECT_EQ(mod["modulation"], "ct_like");
  EXPECT_NE(mod["reconstruction_sha256"], plain["reconstruction_sha256"]);

  r = run_cli("reconstruct " + cfg + img + " --domain nowhere", dir.path());
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(single_error_line(r.err, "unknown_domain")) << r.err;
  EXPECT_NE(r.err.find("ct_like"), std::string::npos);
  EXPECT_NE(r.err.find("noise_20db"), std::string::npos);

  // Measurements saved and reloaded reconstruct identically.
  r = run_cli("reconstruct " + cfg + img + " --save-measurements " + (dir / "y.bin").string() + " --out " +
                  (dir / "a").string(), dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli("reconstruct " + cfg + " --measurements " + (dir / "y.bin").string() + " --out " +
                  (dir / "b").string(), dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "a" / "reconstruct.json"))["reconstruction_sha256"],
            nlohmann::json::parse(slurp(dir / "b" / "reconstruct.json"))["reconstruction_sha256"]);

  r = run_cli("evaluate " + cfg + " --domains source,noise_20db,ct_like", dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(run_dir / "eval" / "report.json"));
  EXPECT_EQ(report["matrix"]["columns"][1], "modulated");
  EXPECT_TRUE(fs::exists(run_dir / "eval" / "profiles.csv"));

  r = run_cli("analyze " + cfg + " --domain ct_like --subsets first_half,last_half", dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto analysis = nlohmann::json::parse(slurp(run_dir / "analysis" / "analysis_ct_like.json"));
  EXPECT_EQ(analysis["sweep"]["subsets"].size(), 2u);

  // A second backbone cannot write into the first one's registry.
  const auto other = dir / "other";
  ASSERT_EQ(run_cli("train-base " + tiny(other) + " prior.seed=9", dir.path()).code, 0);
  r = run_cli("adapt --domain ct_like " + cfg + " --backbone " + (other / "backbone.ckpt").string(), dir.path());
  EXPECT_EQ(r.code, 4);
  EXPECT_TRUE(single_error_line(r.err, "fingerprint_mismatch")) << r.err;

  // Evaluation refuses data that no longer matches the recorded manifest.
  r = run_cli("evaluate " + cfg + " dataset.seed=5 --domains source", dir.path());
  EXPECT_EQ(r.code, 5);
  EXPECT_TRUE(single_error_line(r.err, "manifest_mismatch")) << r.err;
}

TEST(Cli, AdaptingSourceDomainRefused) {
  testing::TempDir dir("cli");
  const std::string cfg = tiny(dir / "run");
  ASSERT_EQ(run_cli("train-base " + cfg, dir.path()).code, 0);
  const auto r = run_cli("adapt " + cfg, dir.path());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("source domain"), std::string::npos);
}

TEST(Cli, OutputRootFromEnvironment) {
  testing::TempDir dir("cli");
  const std::string cmd = "FPNP_OUTPUT_ROOT=" + dir.path().string() + " " + FPNP_CLI_PATH + " train-base --config " +
                          FPNP_DESK_CONFIG +
                          " output.dir=rel dataset.count=10 dataset.size=16 prior.blocks=2 prior.features=4"
                          " solver.iterations=2 training.epochs=1 >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "rel" / "backbone.ckpt"));
}

}  // namespace
}  // namespace fpnp
