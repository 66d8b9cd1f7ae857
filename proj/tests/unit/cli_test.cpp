// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "amlab/cli/app.hpp"
#include "amlab/cli/run_config.hpp"
#include "gtest/gtest.h"

namespace amlab::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result amlab(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(AMLAB_TEST_TMPDIR) / ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  fs::path write_config(const std::string& name, const std::string& json) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << json;
    return p;
  }

  fs::path small_config(const std::string& loss = R"({"variant": "am_softmax", "s": 10, "m": 0.2})",
                        const std::string& extra = "") {
    return write_config("config.json", R"({
      "seed": 3,
      "data": {"synthetic": {"classes": 4, "dim": 8, "train_per_class": 40, "eval_per_class": 20, "spread": 0.1}},
      "mlp": {"hidden": [16], "embed_dim": 3},
      "loss": )" + loss + R"(,
      "train": {"iterations": 150, "batch_size": 32, "lr_decay_iters": [100]},
      "eval": {"verification_pairs": 100)" + extra + R"(}
    })");
  }

  fs::path dir_;
};

TEST_F(CliTest, TrainWritesArtifacts) {
  const Result r = amlab({"train", "--config", small_config().string(), "--out", (dir_ / "run").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"checkpoint.bin", "history.csv", "train_metrics.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  }
  const std::string history = slurp(dir_ / "run" / "history.csv");
  EXPECT_EQ(history.rfind("iter,loss,lr,lambda\n", 0), 0u);
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 151);
}

TEST_F(CliTest, UnknownKeyIsRejectedByName) {
  const fs::path cfg = write_config("bad.json", R"({"loss": {"variant": "am_softmax", "margin": 0.3}})");
  const Result r = amlab({"train", "--config", cfg.string(), "--out", (dir_ / "run").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("loss.margin"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "run"));
}

TEST_F(CliTest, MalformedConfigsExitOne) {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"{not json", "JSON"},
      {R"({"seed": -1})", "seed"},
      {R"({"train": {"lr": "fast"}})", "train.lr"},
      {R"({"loss": {"variant": "cosface"}})", "loss.variant"},
      {R"({"loss": {"variant": "normface", "m": 0.2}})", "loss"},
      {R"({"data": {}})", "data"},
      {R"({"data": {"idx": {"train_images": "a"}}})", "data.idx"},
      {R"({"train": {"iterations": 10, "lr_decay_iters": [20]}})", "train"},
      {R"({"eval": {"verification_pairs": 3}})", "eval.verification_pairs"},
      {R"({"mlp": {"hidden": []}})", "mlp.hidden"},
      {R"({"extra": 1})", "extra"},
  };
  for (const auto& [json, key] : cases) {
    const fs::path cfg = write_config("bad.json", json);
    const Result r = amlab({"train", "--config", cfg.string(), "--out", (dir_ / "run").string()});
    EXPECT_EQ(r.code, kExitConfig) << json;
    EXPECT_NE(r.err.find(key), std::string::npos) << json << " -> " << r.err;
  }
  EXPECT_EQ(amlab({"train", "--config", (dir_ / "missing.json").string()}).code, kExitConfig);
  EXPECT_EQ(amlab({"train"}).code, kExitConfig);
  EXPECT_EQ(amlab({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(amlab({}).code, kExitConfig);
}

TEST_F(CliTest, ConfigDefaultsAndOverrides) {
  const RunConfig c = parse_run_config("{}");
  ASSERT_TRUE(c.data.synthetic.has_value());
  EXPECT_EQ(c.data.synthetic->classes, 10);
  EXPECT_EQ(c.loss.variant, LossVariant::am_softmax);
  const RunConfig n = parse_run_config(R"({"loss": {"variant": "normface", "s": 16}})");
  EXPECT_TRUE(n.loss.feature_norm);
  EXPECT_EQ(n.loss.s, 16.0);
  const RunConfig a = parse_run_config(R"({"loss": {"variant": "a_softmax", "m_mult": 2, "lambda": {"base": 100, "min": 0}}})");
  EXPECT_EQ(a.loss.m_mult, 2);
  EXPECT_EQ(a.loss.lambda_schedule.lambda_base, 100.0);
  EXPECT_FALSE(a.loss.feature_norm);
  const RunConfig nofn = parse_run_config(R"({"loss": {"variant": "am_softmax", "feature_norm": false}})");
  EXPECT_FALSE(nofn.loss.feature_norm);
  EXPECT_NE(derive_seeds(1).data, derive_seeds(1).train);
  EXPECT_EQ(derive_seeds(7).eval, derive_seeds(7).eval);
}

TEST_F(CliTest, AmSoftmaxToyRunEndsBelowLogC) {
  const fs::path cfg = write_config("toy.json", R"({
    "seed": 1,
    "data": {"synthetic": {"classes": 10, "dim": 32, "train_per_class": 100, "eval_per_class": 20}},
    "loss": {"variant": "am_softmax", "s": 10, "m": 0.2},
    "train": {"iterations": 400}
  })");
  ASSERT_EQ(amlab({"train", "--config", cfg.string(), "--out", (dir_ / "run").string()}).code, kExitOk);
  std::istringstream history(slurp(dir_ / "run" / "history.csv"));
  std::string line, last;
  while (std::getline(history, line)) last = line;
  const double final_loss = std::stod(last.substr(last.find(',') + 1));
  EXPECT_LT(final_loss, std::log(10.0));
}

TEST_F(CliTest, EvalIsDeterministicAndClosedSetOmitsDir) {
  const fs::path cfg = small_config();
  const std::string out = (dir_ / "run").string();
  ASSERT_EQ(amlab({"train", "--config", cfg.string(), "--out", out}).code, kExitOk);
  const Result a = amlab({"eval", "--config", cfg.string(), "--out", out});
  const Result b = amlab({"eval", "--config", cfg.string(), "--out", out});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(dir_ / "run" / "metrics.json"), a.out);
  EXPECT_EQ(a.out.find("dir_at_far"), std::string::npos);
  for (const char* key : {"vr_at_far", "rank1", "mean_intra_angle_deg", "min_inter_center_angle_deg"}) {
    EXPECT_NE(a.out.find(key), std::string::npos) << key;
  }
  // Separable data: every probe finds its mate.
  EXPECT_NE(a.out.find("\"rank1\": 1.0"), std::string::npos) << a.out;
}

TEST_F(CliTest, OpenSetEvalReportsDir) {
  const fs::path cfg = small_config(R"({"variant": "am_softmax", "s": 10, "m": 0.2})", R"(, "distractor_classes": 1)");
  const std::string out = (dir_ / "run").string();
  ASSERT_EQ(amlab({"train", "--config", cfg.string(), "--out", out}).code, kExitOk);
  const Result r = amlab({"eval", "--config", cfg.string(), "--out", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("\"dir_at_far\""), std::string::npos);
}

TEST_F(CliTest, EvalRejectsMissingOrCorruptCheckpoint) {
  const fs::path cfg = small_config();
  Result r = amlab({"eval", "--config", cfg.string(), "--out", (dir_ / "none").string()});
  EXPECT_EQ(r.code, kExitConfig);
  std::ofstream(dir_ / "bad.bin") << "AMLBgarbage";
  r = amlab({"eval", "--config", cfg.string(), "--checkpoint", (dir_ / "bad.bin").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos);
}

TEST_F(CliTest, DivergenceExitsTwo) {
  const fs::path cfg = write_config("hot.json", R"({
    "data": {"synthetic": {"classes": 3, "dim": 4, "train_per_class": 20, "eval_per_class": 10}},
    "loss": {"variant": "softmax"},
    "train": {"lr": 1e200, "iterations": 50}
  })");
  const Result r = amlab({"train", "--config", cfg.string(), "--out", (dir_ / "run").string()});
  EXPECT_EQ(r.code, kExitDivergence);
  EXPECT_NE(r.err.find("iteration"), std::string::npos);
}

TEST_F(CliTest, ExportPsiCurveHasFiveCurves) {
  const Result r = amlab({"export", "psi_curve", "--out", dir_.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream csv(slurp(dir_ / "psi_curve.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "theta_deg,softmax,a_softmax_m2_l0,a_softmax_m4_l5,a_softmax_m4_l0,am_softmax_m0.35");
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 181u);
  EXPECT_EQ(amlab({"export", "psi_curve", "--grid", "1", "--out", dir_.string()}).code, kExitConfig);
  EXPECT_EQ(amlab({"export", "histogram", "--out", dir_.string()}).code, kExitConfig);
}

TEST_F(CliTest, ExportFeaturesAreUnitRows) {
  const fs::path cfg = small_config();
  const std::string out = (dir_ / "run").string();
  ASSERT_EQ(amlab({"train", "--config", cfg.string(), "--out", out}).code, kExitOk);
  ASSERT_EQ(amlab({"export", "features", "--config", cfg.string(), "--out", out}).code, kExitOk);
  const std::string first = slurp(dir_ / "run" / "features.csv");
  std::istringstream csv(first);
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "x,y,z,label");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    double x, y, z;
    char c;
    std::istringstream(line) >> x >> c >> y >> c >> z;
    EXPECT_LT(std::abs(std::sqrt(x * x + y * y + z * z) - 1.0), 1e-9) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 80u);
  ASSERT_EQ(amlab({"export", "features", "--config", cfg.string(), "--out", out}).code, kExitOk);
  EXPECT_EQ(slurp(dir_ / "run" / "features.csv"), first);
}

TEST_F(CliTest, ExportGradnormCrossesNearS) {
  const fs::path cfg = small_config();
  const std::string out = (dir_ / "run").string();
  ASSERT_EQ(amlab({"train", "--config", cfg.string(), "--out", out}).code, kExitOk);
  const Result r = amlab({"export", "gradnorm", "--out", out, "--s", "30"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto pos = r.out.find("cross at |f| = ");
  ASSERT_NE(pos, std::string::npos) << r.out;
  const double cross = std::stod(r.out.substr(pos + 15));
  EXPECT_GE(cross, 25.0);
  EXPECT_LE(cross, 35.0);
  EXPECT_EQ(slurp(dir_ / "run" / "gradnorm.csv").rfind("feature_norm,grad_fn,grad_plain\n", 0), 0u);
  EXPECT_EQ(amlab({"export", "gradnorm", "--out", out, "--target-class", "9"}).code, kExitConfig);
}

TEST_F(CliTest, GradcheckPassesAndReportsEachVariant) {
  const Result r = amlab({"gradcheck", "--seed", "1"});
  EXPECT_EQ(r.code, kExitOk) << r.out;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 4);
  for (const char* v : {"softmax ", "normface ", "a_softmax ", "am_softmax "}) {
    EXPECT_NE(r.out.find(v), std::string::npos) << v;
  }
  const Result one = amlab({"gradcheck", "--variants", "am_softmax,normface", "--seeds", "2"});
  EXPECT_EQ(one.code, kExitOk);
  EXPECT_EQ(std::count(one.out.begin(), one.out.end(), '\n'), 2);
}

TEST_F(CliTest, GradcheckCorruptedGradientExitsThree) {
  const Result r = amlab({"gradcheck", "--corrupt-gradient", "1e-3"});
  EXPECT_EQ(r.code, kExitGradCheck);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
  EXPECT_EQ(amlab({"gradcheck", "--variants", "cosface"}).code, kExitConfig);
}

TEST_F(CliTest, TrainIsByteDeterministic) {
  const fs::path cfg = small_config();
  ASSERT_EQ(amlab({"train", "--config", cfg.string(), "--out", (dir_ / "a").string()}).code, kExitOk);
  ASSERT_EQ(amlab({"train", "--config", cfg.string(), "--out", (dir_ / "b").string()}).code, kExitOk);
  ASSERT_EQ(amlab({"train", "--config", cfg.string(), "--seed", "4", "--out", (dir_ / "c").string()}).code, kExitOk);
  for (const char* f : {"checkpoint.bin", "history.csv", "train_metrics.json"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_NE(slurp(dir_ / "a" / "history.csv"), slurp(dir_ / "c" / "history.csv"));
}

}  // namespace
}  // namespace amlab::cli
