#include <gtest/gtest.h>

#include <cstdlib>

#include "fpnp/config.hpp"
#include "test_util.hpp"

namespace fpnp {
namespace {

TEST(Config, DefaultRoundTripIsByteIdentical) {
  const RunConfig c;
  const std::string text = c.to_yaml();
  const auto back = RunConfig::from_yaml(text);
  EXPECT_EQ(back.to_yaml(), text);
}

TEST(Config, ModifiedRoundTrip) {
  RunConfig c;
  c.apply_override("solver.iterations=7");
  c.apply_override("noise.snr_db=25.5");
  c.apply_override("operator.pattern=spiral");
  c.apply_override("adaptation.layers=[0, 3, 4]");
  c.apply_override("evaluation.domains.ct.dataset.source=synthetic:ct_like");
  c.apply_override("evaluation.domains.r10.operator.acceleration=10");
  const std::string text = c.to_yaml();
  const auto back = RunConfig::from_yaml(text);
  EXPECT_EQ(back.to_yaml(), text);
  EXPECT_EQ(back.solver.iterations, 7);
  EXPECT_EQ(*back.noise.snr_db, 25.5);
  EXPECT_EQ(back.op.pattern, MaskPattern::kSpiral);
  EXPECT_EQ(back.adaptation.layers, (std::vector<int>{0, 3, 4}));
  ASSERT_EQ(back.evaluation.domains.size(), 2u);
}

TEST(Config, EveryKeyHasDefaultInEmittedText) {
  const RunConfig c;
  const std::string text = c.to_yaml();
  const auto keys = RunConfig::keys();
  EXPECT_GE(keys.size(), 35u);
  for (const auto& k : keys) {
    const auto leaf = k.substr(k.rfind('.') + 1);
    EXPECT_NE(text.find(leaf + ":"), std::string::npos) << k;
    EXPECT_NO_THROW(c.get(k)) << k;
  }
  EXPECT_NE(text.find('#'), std::string::npos);
}

TEST(Config, SetGetAllKeysRoundTrip) {
  RunConfig c;
  RunConfig d;
  for (const auto& k : RunConfig::keys()) {
    d.set(k, c.get(k));
    EXPECT_EQ(d.get(k), c.get(k)) << k;
  }
}

TEST(Config, DefaultsMatchArchitecture) {
  const RunConfig c;
  EXPECT_EQ(c.prior.blocks, 12);
  EXPECT_EQ(c.prior.features, 64);
  EXPECT_EQ(c.prior.alpha, 0.2);
  EXPECT_EQ(c.training.lr_base, 1e-4);
  EXPECT_EQ(c.training.lr_modulation, 1e-2);
  EXPECT_EQ(c.training.lr_decay_epoch, 50);
  EXPECT_EQ(c.training.epochs, 100);
  EXPECT_EQ(c.dataset.split.train, 0.85);
  EXPECT_EQ(c.dataset.split.val, 0.15);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    RunConfig::from_yaml("solver:\n  iterashuns: 3\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    EXPECT_NE(std::string(e.what()).find("solver.iterashuns"), std::string::npos);
  }
  RunConfig c;
  EXPECT_THROW(c.apply_override("nope=1"), Error);
  EXPECT_THROW(c.apply_override("solver.iterations"), Error);
}

TEST(Config, BadValuesNameKey) {
  RunConfig c;
  try {
    c.set("solver.iterations", "many");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("solver.iterations"), std::string::npos);
  }
  c.solver.gamma = -1;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("solver.gamma"), std::string::npos);
  }
}

TEST(Config, NoneSnr) {
  RunConfig c;
  c.set("noise.snr_db", "30");
  EXPECT_TRUE(c.noise.snr_db.has_value());
  c.set("noise.snr_db", "none");
  EXPECT_FALSE(c.noise.snr_db.has_value());
  EXPECT_EQ(c.get("noise.snr_db"), "none");
}

TEST(Config, DomainOverrides) {
  RunConfig c;
  c.apply_override("evaluation.domains.noisy.noise.snr_db=20");
  const auto d = c.domain("noisy");
  EXPECT_EQ(d.domain_id, "noisy");
  EXPECT_EQ(*d.noise.snr_db, 20.0);
  EXPECT_FALSE(c.noise.snr_db.has_value());
  try {
    c.domain("missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownDomain);
    EXPECT_NE(std::string(e.what()).find("noisy"), std::string::npos);
  }
}

TEST(Config, ComplexSignalShape) {
  RunConfig c;
  c.dataset.size = 32;
  EXPECT_EQ(c.signal_shape().channels, 1);
  c.set("operator.field", "complex");
  EXPECT_EQ(c.signal_shape().channels, 2);
  const auto op = build_operator(c);
  EXPECT_EQ(op.input_shape().channels, 2);
  const auto img = testing::random_image({1, 32, 32}, 1);
  const auto s = to_signal(img, c.signal_shape());
  EXPECT_EQ(s.channels(), 2);
  EXPECT_EQ(s(0, 3, 4), img(0, 3, 4));
  EXPECT_EQ(s(1, 3, 4), 0.0);
}

TEST(Config, GaussianOperatorSize) {
  RunConfig c;
  c.dataset.size = 16;
  c.op.type = "gaussian";
  c.op.acceleration = 4;
  EXPECT_EQ(build_operator(c).output_size(), 64);
}

TEST(Config, OutputRootFromEnvironment) {
  RunConfig c;
  c.output.dir = "runs/x";
  ::setenv("FPNP_OUTPUT_ROOT", "/tmp/root", 1);
  EXPECT_EQ(output_dir(c), std::filesystem::path("/tmp/root/runs/x"));
  c.output.dir = "/abs/x";
  EXPECT_EQ(output_dir(c), std::filesystem::path("/abs/x"));
  ::unsetenv("FPNP_OUTPUT_ROOT");
  ::setenv("FPNP_WORKERS", "3", 1);
  EXPECT_EQ(worker_count(c), 3);
  ::unsetenv("FPNP_WORKERS");
  EXPECT_EQ(worker_count(c), 1);
}

TEST(Config, FileRoundTrip) {
  testing::TempDir dir("cfg");
  RunConfig c;
  c.prior.blocks = 5;
  c.save(dir / "c.yaml");
  EXPECT_EQ(RunConfig::load(dir / "c.yaml").prior.blocks, 5);
  EXPECT_THROW(RunConfig::load(dir / "missing.yaml"), Error);
}

}  // namespace
}  // namespace fpnp
