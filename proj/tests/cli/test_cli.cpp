// Drives the lrgan executable end to end. LRGAN_BIN is set by the build.
#include "lrgan/data.hpp"
#include "lrgan/image_io.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(LRGAN_BIN) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("lrgan_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir / "img");
    std::ofstream(dir / "tiny.yaml") << "hr_size: 16\n"
                                        "lr_size: 4\n"
                                        "model:\n"
                                        "  base_channels: 4\n"
                                        "  max_channels: 8\n"
                                        "  num_scales: 2\n"
                                        "  bottleneck_blocks: 1\n"
                                        "  d_base_channels: 4\n"
                                        "  d_max_channels: 8\n"
                                        "batch_size: 2\n"
                                        "checkpoint_interval: 2\n"
                                        "log_interval: 1\n"
                                        "sample_interval: 2\n"
                                        "data:\n"
                                        "  synthetic_count: 24\n";
    const auto data = lrgan::make_synthetic_dataset(4, 16, 5);
    for (size_t i = 0; i < data.size(); ++i) {
      lrgan::save_png((dir / "img" / ("hr" + std::to_string(i) + ".png")).string(), data.items[i]);
    }
    lrgan::save_png((dir / "img" / "big.png").string(), lrgan::make_synthetic_dataset(2, 32, 6).items[0]);
    const auto r = run("train --config " + (dir / "tiny.yaml").string() + " --steps 3 --quiet --out " +
                       (dir / "run").string());
    train_code = r.code;
    train_output = r.output;
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }

  static std::string ckpt() { return (dir / "run" / "latest.ckpt").string(); }
  static std::string img(const std::string& name) { return (dir / "img" / name).string(); }

  static inline fs::path dir;
  static inline int train_code = -1;
  static inline std::string train_output;
};

}  // namespace

TEST_F(Cli, HelpListsSubcommandsAndFlags) {
  const auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* s : {"train", "generate", "evaluate", "perturb", "downscale", "serve"}) {
    EXPECT_NE(r.output.find(s), std::string::npos) << s;
  }
  const auto t = run("train --help");
  for (const char* s : {"--config", "--set", "--resume", "--seed", "--out", "--steps"}) {
    EXPECT_NE(t.output.find(s), std::string::npos) << s;
  }
}

TEST_F(Cli, TrainWritesArtifacts) {
  ASSERT_EQ(train_code, 0) << train_output;
  EXPECT_TRUE(fs::exists(dir / "run" / "latest.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint_2.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "run" / "losses.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "run" / "config.yaml"));
  EXPECT_TRUE(fs::exists(dir / "run" / "samples" / "step_2.png"));
}

TEST_F(Cli, TrainResumes) {
  ASSERT_EQ(train_code, 0) << train_output;
  const auto r = run("train --resume " + ckpt() + " --steps 1 --quiet --out " + (dir / "resumed").string());
  ASSERT_EQ(r.code, 0) << r.output;
  std::ifstream log(dir / "resumed" / "losses.jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(log, line));
  EXPECT_EQ(nlohmann::json::parse(line).at("step").get<int>(), 4);
}

TEST_F(Cli, InvalidConfigRejected) {
  const auto r = run("train --config " + (dir / "tiny.yaml").string() + " --set batch_size=1 --steps 1 --out " +
                     (dir / "bad").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("batch_size"), std::string::npos) << r.output;
  const auto unknown = run("train --set no_such_key=3 --steps 1 --out " + (dir / "bad").string());
  EXPECT_NE(unknown.code, 0);
  EXPECT_NE(unknown.output.find("no_such_key"), std::string::npos) << unknown.output;
}

TEST_F(Cli, GenerateIsDeterministic) {
  ASSERT_EQ(train_code, 0) << train_output;
  const auto a = dir / "gen_a.png", b = dir / "gen_b.png";
  const std::string base = "generate --checkpoint " + ckpt() + " --source " + img("hr0.png") + " --hr-target " +
                           img("hr1.png") + " --out ";
  ASSERT_EQ(run(base + a.string()).code, 0);
  ASSERT_EQ(run(base + b.string()).code, 0);
  EXPECT_EQ(read_bytes(a), read_bytes(b));
  EXPECT_EQ(lrgan::load_image(a.string()).size(1), 16);
}

TEST_F(Cli, GenerateWithLrTargetAndMismatch) {
  ASSERT_EQ(train_code, 0) << train_output;
  lrgan::save_png((dir / "lr4.png").string(), torch::zeros({3, 4, 4}));
  lrgan::save_png((dir / "lr5.png").string(), torch::zeros({3, 5, 5}));
  const std::string base = "generate --checkpoint " + ckpt() + " --source " + img("hr0.png");
  EXPECT_EQ(run(base + " --lr-target " + (dir / "lr4.png").string() + " --out " + (dir / "g4.png").string()).code, 0);
  const auto bad = run(base + " --lr-target " + (dir / "lr5.png").string() + " --out " + (dir / "g5.png").string());
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.output.find("error"), std::string::npos);
  EXPECT_NE(run(base + " --out " + (dir / "g6.png").string()).code, 0);
}

TEST_F(Cli, GenerateGrid) {
  ASSERT_EQ(train_code, 0) << train_output;
  const auto out = dir / "grid.png";
  const auto r = run("generate --checkpoint " + ckpt() + " --sources " + img("hr0.png") + " " + img("hr1.png") +
                     " " + img("hr2.png") + " --targets " + img("hr3.png") + " " + img("hr1.png") + " " +
                     img("hr0.png") + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto grid = lrgan::load_image(out.string());
  EXPECT_EQ(grid.size(1), 4 * 16);
  EXPECT_EQ(grid.size(2), 4 * 16);

  const auto mismatch = run("generate --checkpoint " + ckpt() + " --sources " + img("hr0.png") + " --targets " +
                            img("big.png") + " --out " + (dir / "grid_bad.png").string());
  EXPECT_NE(mismatch.code, 0);
  EXPECT_NE(mismatch.output.find("32x32"), std::string::npos) << mismatch.output;
}

TEST_F(Cli, EvaluateWritesReport) {
  ASSERT_EQ(train_code, 0) << train_output;
  const auto out = dir / "eval";
  const auto r = run("evaluate --checkpoint " + ckpt() + " --split all --samples-per-lr 2 --max-targets 3 --out " +
                     out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto report = nlohmann::json::parse(read_bytes(out / "report.json"));
  EXPECT_EQ(report.at("generated_count").get<int>(), 6);
  EXPECT_TRUE(report.contains("published_reference"));
  EXPECT_TRUE(fs::exists(out / "samples.png"));

  const auto p = run("evaluate --checkpoint " + ckpt() + " --data " + (dir / "img").string() +
                     " --split all --samples-per-lr 2 --perturb grayscale --out " + (dir / "eval_gray").string());
  ASSERT_EQ(p.code, 0) << p.output;
  EXPECT_EQ(nlohmann::json::parse(read_bytes(dir / "eval_gray" / "report.json")).at("perturbation"), "grayscale");
}

TEST_F(Cli, DownscaleAndPerturb) {
  const auto r = run("downscale --input " + img("hr0.png") + " --factor 4 --json");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = nlohmann::json::parse(r.output);
  EXPECT_EQ(j.at("lr").size(), 4u * 4u * 3u);
  EXPECT_EQ(j.at("height").get<int>(), 4);
  EXPECT_NE(run("downscale --input " + img("hr0.png") + " --factor 5 --json").code, 0);

  const auto lr = dir / "lr.png";
  ASSERT_EQ(run("downscale --input " + img("hr0.png") + " --lr-size 4 --out " + lr.string()).code, 0);
  const auto gray = dir / "gray.png";
  ASSERT_EQ(run("perturb --input " + lr.string() + " --perturb grayscale --out " + gray.string()).code, 0);
  const auto g = lrgan::load_image(gray.string());
  EXPECT_TRUE(torch::equal(g[0], g[1]));
  EXPECT_NE(run("perturb --input " + lr.string() + " --perturb blur --out " + gray.string()).code, 0);
}
