#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "gfsr/cli.hpp"
#include "gfsr/config.hpp"
#include "gfsr/error.hpp"
#include "gfsr/fileio.hpp"
#include "oracles.hpp"

using namespace gfsr;
namespace fs = std::filesystem;

namespace {

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "gfsr");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

const char* kSmallConfig =
    "gen.image_size = 32\ngen.n_train = 24\ngen.n_test = 16\ngen.blob_radius_min = 3\n"
    "gen.blob_radius_max = 5\nslic.k = 30\nconcepts.k = 4\nconcepts.pretrain_epochs = 2\n"
    "annotate.per_class = 2\ntrain.epochs = 2\ngradcam.count = 3\n"
    "robust.perturb = occlude:2,2,6,6,0; crop:4,4,24,24; blur:8\n";

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const auto cfg = parse_config_text("");
  EXPECT_EQ(cfg.seed, 0u);
  EXPECT_EQ(cfg.slic.k, 50u);
  EXPECT_DOUBLE_EQ(cfg.slic.compactness, 10.0);
  EXPECT_EQ(cfg.concepts_k, 7u);
  EXPECT_EQ(cfg.annotate_per_class, 5u);
  EXPECT_FALSE(cfg.epochs.has_value());
  EXPECT_EQ(cfg.train_config().epochs, 800u);
  EXPECT_EQ(cfg.perturbations.size(), 1u);
  EXPECT_EQ(cfg.manifest_path(), fs::path("work") / "data" / "manifest.csv");
}

TEST(Config, KeysAndComments) {
  const auto cfg = parse_config_text(
      "# comment\nslic.k = 50\n\nslic.compactness = 10.0  # trailing\ntrain.guided = false\nseed = 9\n");
  EXPECT_EQ(cfg.slic.k, 50u);
  EXPECT_DOUBLE_EQ(cfg.slic.compactness, 10.0);
  EXPECT_EQ(cfg.train_config().epochs, 300u);
  EXPECT_FALSE(cfg.train_config().guided);
  EXPECT_EQ(cfg.seed, 9u);
}

TEST(Config, UnknownKeyNamesLine) {
  try {
    parse_config_text("slic.k = 50\nslic.q = 1\n", "run.cfg");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("run.cfg:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("slic.q"), std::string::npos) << msg;
  }
}

TEST(Config, MalformedInputRejected) {
  EXPECT_THROW(parse_config_text("slic.k 50\n"), Error);
  EXPECT_THROW(parse_config_text("slic.k = fifty\n"), Error);
  EXPECT_THROW(parse_config_text("slic.k = 5\nslic.k = 6\n"), Error);
  EXPECT_THROW(parse_config_text("loss.alpha = 1.5\n"), Error);
  EXPECT_THROW(parse_config_text("robust.perturb = wobble:3\n"), Error);
  EXPECT_THROW(parse_config("/nonexistent/gfsr.cfg"), Error);
}

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(invoke({"--help"}), 0);
  EXPECT_EQ(invoke({"--no-such-flag", "gen-data"}), 1);
  EXPECT_EQ(invoke({"frobnicate"}), 1);
  EXPECT_EQ(invoke({}), 1);
}

TEST(Cli, MissingInputsAreDataErrors) {
  oracle::TempDir dir("cli_missing");
  EXPECT_EQ(invoke({"--workdir", dir.path().string(), "train"}), 2);
  EXPECT_EQ(invoke({"--config", (dir / "absent.cfg").string(), "gen-data"}), 2);
  EXPECT_FALSE(fs::exists(dir / "train" / "model.ckpt"));
}

TEST(Cli, LockBlocksConcurrentRun) {
  oracle::TempDir dir("cli_lock");
  write_file_atomic(dir / ".gfsr.lock", "");
  EXPECT_EQ(invoke({"--workdir", dir.path().string(), "gen-data"}), 2);
}

TEST(Cli, SmokeChainIsReproducible) {
  oracle::TempDir dir("cli_chain");
  write_file_atomic(dir / "run.cfg", kSmallConfig);
  const std::vector<std::string> base = {"--config", (dir / "run.cfg").string(), "--seed", "3"};
  auto stage = [&](const fs::path& work, const std::string& name) {
    auto args = base;
    args.insert(args.end(), {"--workdir", work.string(), name});
    return invoke(args);
  };
  const std::vector<std::string> chain = {"gen-data", "segment",  "annotate-prep", "embed", "concepts", "masks",
                                          "train",    "gradcam", "eval",          "robust", "report"};
  for (const auto& s : chain) ASSERT_EQ(stage(dir / "a", s), 0) << s;
  for (const char* f : {"data/manifest.csv", "concepts/model.bin", "concepts/summary.csv", "train/model.ckpt",
                        "train/history.csv", "gradcam/summary.csv", "eval/metrics.csv", "eval/predictions.csv",
                        "robust/summary.csv", "robust/perturbation_2.csv", "report/report.txt",
                        "report/summary.csv"}) {
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  }
  EXPECT_FALSE(fs::exists(dir / "a" / ".gfsr.lock"));
  const auto history = read_file(dir / "a" / "train" / "history.csv");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);

  // second workdir from scratch, then a re-run of one stage in place
  for (const auto& s : chain) ASSERT_EQ(stage(dir / "b", s), 0) << s;
  const auto ckpt = read_file(dir / "a" / "train" / "model.ckpt");
  EXPECT_EQ(read_file(dir / "b" / "train" / "model.ckpt"), ckpt);
  EXPECT_EQ(read_file(dir / "b" / "report" / "report.txt"), read_file(dir / "a" / "report" / "report.txt"));
  ASSERT_EQ(stage(dir / "a", "train"), 0);
  EXPECT_EQ(read_file(dir / "a" / "train" / "model.ckpt"), ckpt);
  for (const auto& entry : fs::directory_iterator(dir / "a" / "masks")) {
    const auto other = dir / "b" / "masks" / entry.path().filename();
    EXPECT_EQ(read_file(entry.path()), read_file(other)) << entry.path();
  }
}
