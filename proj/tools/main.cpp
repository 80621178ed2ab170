// lrgan: train, generate, evaluate, perturb, downscale and serve.

#include "lrgan/checkpoint.hpp"
#include "lrgan/config.hpp"
#include "lrgan/error.hpp"
#include "lrgan/evaluation.hpp"
#include "lrgan/image_io.hpp"
#include "lrgan/imaging.hpp"
#include "lrgan/service.hpp"
#include "lrgan/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace lrgan;

namespace {

struct Options {
  // shared
  std::string config_path;
  std::string profile = "toy";
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  std::string out;
  std::string checkpoint;
  // train
  std::string resume;
  std::optional<int64_t> steps;
  bool quiet = false;
  // generate
  std::string source;
  std::string lr_target;
  std::string hr_target;
  std::vector<std::string> grid_sources;
  std::vector<std::string> grid_targets;
  // evaluate
  std::string data_root;
  std::string split = "val";
  int64_t samples_per_lr = 10;
  int64_t max_targets = 0;
  std::string perturb = "none";
  std::string extractor;
  // perturb / downscale
  std::string input;
  int64_t factor = 0;
  int64_t lr_size = 0;
  bool print_json = false;
  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
};

TrainConfig resolve_config(const Options& o) {
  TrainConfig base;
  if (o.profile == "toy") {
    base = TrainConfig::toy();
  } else if (o.profile != "full") {
    throw ConfigError("profile: expected 'toy' or 'full', got '" + o.profile + "'");
  }
  auto c = o.config_path.empty() ? base : load_config_file(o.config_path, base);
  c.apply_overrides(o.overrides);
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

torch::Tensor load_exact(const std::string& path, int64_t size, const std::string& what) {
  auto img = load_image(path);
  if (img.size(1) != size || img.size(2) != size) {
    throw ConfigError(what + " '" + path + "' is " + std::to_string(img.size(1)) + "x" +
                      std::to_string(img.size(2)) + ", the checkpoint expects " +
                      std::to_string(size) + "x" + std::to_string(size));
  }
  return img;
}

int run_train(const Options& o) {
  TrainState state = o.resume.empty() ? make_train_state(resolve_config(o)) : load_checkpoint(o.resume);
  if (!o.resume.empty() && (!o.overrides.empty() || !o.config_path.empty())) {
    std::cerr << "note: --resume restores the checkpoint's config; --config/--set are ignored\n";
  }
  const auto data = resolve_dataset(state.config, Split::kTrain);
  TrainOptions opts;
  opts.out_dir = o.out.empty() ? "runs/latest" : o.out;
  opts.step_budget = o.steps;
  opts.verbose = !o.quiet;
  fs::create_directories(opts.out_dir);
  write_text(fs::path(opts.out_dir) / "config.yaml", state.config.to_yaml());
  train(state, data, opts);
  std::cout << "checkpoint: " << (fs::path(opts.out_dir) / "latest.ckpt").string() << "\n";
  return 0;
}

int run_generate(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto state = load_checkpoint(o.checkpoint);
  const auto& c = state.config;
  const auto out = o.out.empty() ? std::string("generated.png") : o.out;
  Translator model = [&](const torch::Tensor& x, const torch::Tensor& lr) {
    return translate(state.generator, x, lr);
  };

  if (!o.grid_sources.empty() || !o.grid_targets.empty()) {
    if (o.grid_sources.empty() || o.grid_targets.empty()) {
      throw ConfigError("grid mode needs both --sources and --targets");
    }
    std::vector<torch::Tensor> src, tgt;
    for (const auto& p : o.grid_sources) src.push_back(load_exact(p, c.hr_size, "source"));
    for (const auto& p : o.grid_targets) tgt.push_back(load_exact(p, c.hr_size, "target"));
    const auto lr = downscale_to(torch::stack(tgt), c.lr_size, c.lr_size);
    const auto grid = translation_grid(model, torch::stack(src), lr);
    save_png(out, grid.image);
    std::cout << out << " (" << grid.tiles.size() << " tiles)\n";
    return 0;
  }

  if (o.source.empty()) throw ConfigError("--source is required");
  if (o.lr_target.empty() == o.hr_target.empty()) {
    throw ConfigError("give exactly one of --lr-target and --hr-target");
  }
  const auto x = load_exact(o.source, c.hr_size, "source").unsqueeze(0);
  const auto lr = o.lr_target.empty()
                      ? downscale_to(load_exact(o.hr_target, c.hr_size, "hr target").unsqueeze(0),
                                     c.lr_size, c.lr_size)
                      : load_exact(o.lr_target, c.lr_size, "lr target").unsqueeze(0);
  const auto y = model(x, lr);
  save_png(out, y);
  const auto consistency = (downscale_to(y, c.lr_size, c.lr_size) - lr).abs().mean().item<double>();
  std::cout << out << " consistency=" << consistency << "\n";
  return 0;
}

int run_evaluate(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto state = load_checkpoint(o.checkpoint);
  const auto& c = state.config;
  Split split = Split::kVal;
  if (o.split == "train") split = Split::kTrain;
  else if (o.split == "all") split = Split::kAll;
  else if (o.split != "val") throw ConfigError("split: expected train, val or all");
  const auto data =
      o.data_root.empty() ? resolve_dataset(c, split) : load_dataset(o.data_root, c.hr_size, split);

  EvalOptions eo;
  eo.lr_size = c.lr_size;
  eo.samples_per_lr = o.samples_per_lr;
  eo.max_targets = o.max_targets;
  eo.seed = o.seed.value_or(0);
  eo.perturbation = LrPerturbation::parse(o.perturb);
  eo.perturbation.seed = eo.seed;
  auto extractor = make_extractor(o.extractor);
  Translator model = [&](const torch::Tensor& x, const torch::Tensor& lr) {
    return translate(state.generator, x, lr);
  };
  std::vector<torch::Tensor> generated;
  const auto report = eval_protocol(model, data, eo, *extractor, &generated);

  const fs::path dir = o.out.empty() ? fs::path("eval") : fs::path(o.out);
  write_text(dir / "report.json", report.to_json());
  const auto shown = std::min<size_t>(generated.size(), 64);
  std::vector<torch::Tensor> tiles(generated.begin(), generated.begin() + static_cast<long>(shown));
  if (!tiles.empty()) save_png((dir / "samples.png").string(), mosaic(tiles, eo.samples_per_lr, c.hr_size));
  std::cout << "fid=" << report.fid << " lpips=" << report.lpips_mean
            << " consistency=" << report.consistency_mean << " extractor=" << report.extractor
            << (report.extractor_fallback ? " (fallback)" : "") << "\n"
            << (dir / "report.json").string() << "\n";
  return 0;
}

int run_perturb(const Options& o) {
  if (o.input.empty()) throw ConfigError("--input is required");
  auto p = LrPerturbation::parse(o.perturb);
  p.seed = o.seed.value_or(0);
  const auto out = perturb_lr(load_image(o.input).unsqueeze(0), p);
  const auto path = o.out.empty() ? std::string("perturbed.png") : o.out;
  save_png(path, out);
  std::cout << path << " (" << p.describe() << ")\n";
  return 0;
}

int run_downscale(const Options& o) {
  if (o.input.empty()) throw ConfigError("--input is required");
  if ((o.factor > 0) == (o.lr_size > 0)) throw ConfigError("give exactly one of --factor and --lr-size");
  const auto img = load_image(o.input).unsqueeze(0);
  const auto lr = o.factor > 0 ? downscale(img, o.factor) : downscale_to(img, o.lr_size, o.lr_size);
  if (o.print_json) {
    std::cout << nlohmann::json{{"lr", to_flat_hwc(lr)}, {"height", lr.size(2)}, {"width", lr.size(3)}}.dump()
              << "\n";
  }
  if (!o.out.empty()) save_png(o.out, lr);
  return 0;
}

int run_serve(const Options& o) {
  const auto service = o.checkpoint.empty() ? InferenceService() : InferenceService::from_checkpoint(o.checkpoint);
  if (!service.loaded()) std::cerr << "warning: no --checkpoint given; /api/generate will answer 503\n";
  HttpServer server(service, o.static_dir);
  const auto port = server.bind(o.host, o.port);
  std::cout << "listening on http://" << o.host << ":" << port << std::endl;
  server.listen();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image-to-image translation conditioned on a low-resolution target"};
  app.require_subcommand(1);
  Options o;

  const auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config_path, "YAML config file")->check(CLI::ExistingFile);
    cmd->add_option("--profile", o.profile, "Base profile before the config file: toy | full")
        ->capture_default_str();
    cmd->add_option("--set", o.overrides, "Override a config key: key=value (repeatable)");
  };

  auto* train = app.add_subcommand("train", "Train a model");
  add_config(train);
  train->add_option("--resume", o.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--seed", o.seed, "Random seed (overrides config)");
  train->add_option("--out", o.out, "Output directory (default runs/latest)");
  train->add_option("--steps", o.steps, "Stop after this many steps in this invocation");
  train->add_flag("--quiet", o.quiet, "No progress output");

  auto* gen = app.add_subcommand("generate", "Translate a source image to an LR target");
  gen->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  gen->add_option("--source", o.source, "Source HR image")->check(CLI::ExistingFile);
  gen->add_option("--lr-target", o.lr_target, "LR target image")->check(CLI::ExistingFile);
  gen->add_option("--hr-target", o.hr_target, "HR target image, downscaled to the LR size")
      ->check(CLI::ExistingFile);
  gen->add_option("--sources", o.grid_sources, "Grid mode: source images")->check(CLI::ExistingFile);
  gen->add_option("--targets", o.grid_targets, "Grid mode: HR target images")->check(CLI::ExistingFile);
  gen->add_option("--seed", o.seed, "Random seed");
  gen->add_option("--out", o.out, "Output PNG (default generated.png)");

  auto* eval = app.add_subcommand("evaluate", "FID / LPIPS / consistency on a dataset split");
  eval->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", o.data_root, "Image directory (default: the checkpoint's dataset)");
  eval->add_option("--split", o.split, "train | val | all")->capture_default_str();
  eval->add_option("--samples-per-lr", o.samples_per_lr, "Sources translated per LR target")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  eval->add_option("--max-targets", o.max_targets, "Limit the number of LR targets (0: all)");
  eval->add_option("--perturb", o.perturb, "none | grayscale | gaussian:SIGMA | manual:r,c,R,G,B;...")
      ->capture_default_str();
  eval->add_option("--extractor", o.extractor, "TorchScript feature extractor (default: built-in fallback)");
  eval->add_option("--seed", o.seed, "Random seed");
  eval->add_option("--out", o.out, "Report directory (default eval)");

  auto* pert = app.add_subcommand("perturb", "Apply an LR perturbation to an image");
  pert->add_option("--input", o.input, "LR image")->required()->check(CLI::ExistingFile);
  pert->add_option("--perturb", o.perturb, "grayscale | gaussian:SIGMA | manual:r,c,R,G,B;...")->required();
  pert->add_option("--seed", o.seed, "Noise seed");
  pert->add_option("--out", o.out, "Output PNG (default perturbed.png)");

  auto* down = app.add_subcommand("downscale", "Average-pool an image to LR");
  down->add_option("--input", o.input, "Image")->required()->check(CLI::ExistingFile);
  down->add_option("--factor", o.factor, "Pooling factor");
  down->add_option("--lr-size", o.lr_size, "Target LR size");
  down->add_option("--out", o.out, "Output PNG");
  down->add_flag("--json", o.print_json, "Print {lr: flat HWC pixels, height, width} as JSON");

  auto* serve = app.add_subcommand("serve", "Run the HTTP generation service");
  serve->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  serve->add_option("--host", o.host, "Bind address")->capture_default_str();
  serve->add_option("--port", o.port, "Port (0: any free port)")->capture_default_str();
  serve->add_option("--static", o.static_dir, "Directory served at /");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return run_train(o);
    if (gen->parsed()) return run_generate(o);
    if (eval->parsed()) return run_evaluate(o);
    if (pert->parsed()) return run_perturb(o);
    if (down->parsed()) return run_downscale(o);
    if (serve->parsed()) return run_serve(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
