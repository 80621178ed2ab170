#include "lrgan/training.hpp"

#include "lrgan/checkpoint.hpp"
#include "lrgan/error.hpp"
#include "lrgan/evaluation.hpp"
#include "lrgan/image_io.hpp"
#include "lrgan/imaging.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace lrgan {

namespace fs = std::filesystem;

namespace {

void set_requires_grad(torch::nn::Module& module, bool flag) {
  for (auto& p : module.parameters()) p.set_requires_grad(flag);
}

std::unique_ptr<torch::optim::Adam> make_adam(std::vector<torch::Tensor> params, double lr,
                                              double beta1, double beta2) {
  return std::make_unique<torch::optim::Adam>(
      std::move(params), torch::optim::AdamOptions(lr).betas({beta1, beta2}).eps(1e-8));
}

double mean_consistency(const torch::Tensor& generated, const torch::Tensor& target) {
  torch::NoGradGuard no_grad;
  return (downscale_to(generated, target.size(2), target.size(3)) - target)
      .abs()
      .mean()
      .item<double>();
}

}  // namespace

TrainState make_train_state(const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.config = config;
  torch::manual_seed(config.seed);
  s.generator = Generator(config.generator_spec());
  s.discriminator = Discriminator(config.discriminator_spec());
  s.opt_g = make_adam(s.generator->parameters(), config.lr_g, config.adam_beta1, config.adam_beta2);
  s.opt_d = make_adam(s.discriminator->parameters(), config.lr_d, config.adam_beta1,
                      config.adam_beta2);
  s.rng.seed(config.seed);
  return s;
}

std::string loss_record_json(int64_t step, const LossBundle& l, double steps_per_sec) {
  nlohmann::json j;
  j["step"] = step;
  j["adv_d"] = l.adv_d;
  j["adv_g"] = l.adv_g;
  j["cyc"] = l.cyc;
  j["rec"] = l.rec;
  j["r1"] = l.r1;
  j["total_g"] = l.total_g;
  j["total_d"] = l.total_d;
  j["consistency"] = l.consistency;
  if (steps_per_sec > 0.0) j["steps_per_sec"] = steps_per_sec;
  // Non-finite values become null in JSON; keep them readable instead.
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

LossBundle train_step(TrainState& state, const PairBatch& batch) {
  const auto& cfg = state.config;
  auto& gen = state.generator;
  auto& disc = state.discriminator;
  gen->train();
  disc->train();

  const auto g_fn = [&](const torch::Tensor& x, const torch::Tensor& lr) {
    return gen->forward(x, lr);
  };
  const auto d_fn = [&](const torch::Tensor& img, const torch::Tensor& diff) {
    return disc->forward(img, diff);
  };

  TranslationSet t;
  t.x = batch.x;
  t.y = batch.y;
  t.x_lr = downscale_to(t.x, cfg.lr_size, cfg.lr_size);
  t.y_lr = downscale_to(t.y, cfg.lr_size, cfg.lr_size);

  // Four generator passes.
  t.x_y = g_fn(t.x, t.y_lr);
  t.y_x = g_fn(t.y, t.x_lr);
  t.x_rec = g_fn(t.x_y, t.x_lr);
  t.y_rec = g_fn(t.y_x, t.y_lr);

  LossBundle out;

  // Discriminator update: adversarial objective on detached fakes plus R1 on the reals.
  set_requires_grad(*disc, true);
  state.opt_d->zero_grad();
  TranslationSet td = t;
  const bool with_r1 = cfg.r1_gamma > 0.0;
  td.x = t.x.detach().requires_grad_(with_r1);
  td.y = t.y.detach().requires_grad_(with_r1);
  const auto adv = overall_adversarial(d_fn, td, cfg.color_step, /*detach_fakes=*/true);
  auto r1 = torch::zeros({}, t.x.options());
  if (with_r1) {
    r1 = 0.5 * (r1_penalty_from_logits(adv.real_logits_x, td.x, cfg.r1_gamma) +
                r1_penalty_from_logits(adv.real_logits_y, td.y, cfg.r1_gamma));
  }
  const auto total_d = adv.d_loss + r1;
  out.adv_d = adv.d_loss.item<double>();
  out.r1 = r1.item<double>();
  out.total_d = total_d.item<double>();
  const auto diverged = [&]() {
    return TrainingDiverged("non-finite loss: " + loss_record_json(state.step + 1, out, 0.0));
  };
  if (!std::isfinite(out.total_d)) throw diverged();
  total_d.backward();
  state.opt_d->step();
  refresh_spectral_norms(*disc);
  ++state.d_updates;

  // Generator update against the refreshed discriminator.
  set_requires_grad(*disc, false);
  state.opt_g->zero_grad();
  const auto adv_g = generator_adversarial(d_fn, t, cfg.color_step);
  const auto rec = reconstruction_loss(t.x, t.x_rec, t.y, t.y_rec);
  const auto cyc =
      cfg.cycle_form == "enumerated" ? enumerated_cycle_loss(g_fn, t, cfg.lr_size) : rec;
  auto total_g = cfg.lambda_cyc * cyc + cfg.rec_weight * rec;
  if (cfg.generator_adv) total_g = total_g + adv_g;
  out.adv_g = adv_g.item<double>();
  out.cyc = cyc.item<double>();
  out.rec = rec.item<double>();
  out.total_g = total_g.item<double>();
  out.consistency = 0.5 * (mean_consistency(t.x_y, t.y_lr) + mean_consistency(t.y_x, t.x_lr));
  if (!out.finite()) throw diverged();
  // With every generator term switched off the update is a no-op.
  if (cfg.generator_adv || cfg.lambda_cyc > 0.0 || cfg.rec_weight > 0.0) {
    total_g.backward();
    state.opt_g->step();
    refresh_spectral_norms(*state.generator);
  }
  ++state.g_updates;
  set_requires_grad(*disc, true);

  ++state.step;
  return out;
}

LossBundle train_step(TrainState& state, const Dataset& dataset) {
  return train_step(state, sample_batch(dataset, state.config.batch_size, state.rng));
}

torch::Tensor translate(Generator& generator, const torch::Tensor& x, const torch::Tensor& lr) {
  torch::NoGradGuard no_grad;
  const bool was_training = generator->is_training();
  generator->eval();
  auto out = generator->forward(x, lr);
  if (was_training) generator->train();
  return out;
}

Dataset resolve_dataset(const TrainConfig& config, Split split) {
  if (config.synthetic_count > 0) {
    return split_dataset(
        make_synthetic_dataset(config.synthetic_count, config.hr_size, config.synthetic_seed), split);
  }
  if (config.data_root.empty()) {
    throw DatasetError("no dataset configured: set data.root or data.synthetic_count");
  }
  return load_dataset(config.data_root, config.hr_size, split, config.data_domain);
}

void train(TrainState& state, const Dataset& dataset, const TrainOptions& options) {
  if (dataset.size() < 2) throw DatasetError("training needs at least two images");
  if (dataset.resolution != state.config.hr_size) {
    throw ConfigError("dataset resolution " + std::to_string(dataset.resolution) +
                      " does not match hr_size " + std::to_string(state.config.hr_size));
  }
  const auto& cfg = state.config;
  std::ofstream log;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    fs::create_directories(fs::path(options.out_dir) / "samples");
    log.open(fs::path(options.out_dir) / "losses.jsonl", std::ios::app);
  }

  // Fixed preview: first four items as sources, next four as LR targets.
  const auto preview = std::min<size_t>(4, dataset.size() / 2);
  std::vector<size_t> preview_src, preview_tgt;
  for (size_t i = 0; i < preview; ++i) {
    preview_src.push_back(i);
    preview_tgt.push_back(preview + i);
  }

  const auto save = [&](const std::string& name) {
    if (options.out_dir.empty()) return;
    save_checkpoint(state, (fs::path(options.out_dir) / name).string());
  };

  int64_t done = 0;
  auto window_start = std::chrono::steady_clock::now();
  int64_t window_steps = 0;
  while (state.step < cfg.max_steps && (!options.step_budget || done < *options.step_budget)) {
    const auto losses = train_step(state, dataset);
    ++done;
    ++window_steps;
    double rate = 0.0;
    const bool log_now = cfg.log_interval > 0 && state.step % cfg.log_interval == 0;
    if (log_now) {
      const auto now = std::chrono::steady_clock::now();
      const double secs = std::chrono::duration<double>(now - window_start).count();
      rate = secs > 0.0 ? static_cast<double>(window_steps) / secs : 0.0;
      window_start = now;
      window_steps = 0;
    }
    if (log.is_open()) log << loss_record_json(state.step, losses, rate) << "\n" << std::flush;
    if (log_now && options.verbose) {
      std::cout << "step " << state.step << std::fixed << std::setprecision(4)
                << "  adv_d " << losses.adv_d << "  adv_g " << losses.adv_g << "  cyc "
                << losses.cyc << "  r1 " << losses.r1 << "  consistency " << losses.consistency
                << "  " << std::setprecision(2) << rate << " steps/s" << std::endl;
    }
    if (!options.out_dir.empty() && cfg.sample_interval > 0 && state.step % cfg.sample_interval == 0 &&
        preview > 0) {
      const auto grid = translation_grid(
          [&](const torch::Tensor& x, const torch::Tensor& lr) { return translate(state.generator, x, lr); },
          dataset.stack(preview_src),
          downscale_to(dataset.stack(preview_tgt), cfg.lr_size, cfg.lr_size));
      save_png((fs::path(options.out_dir) / "samples" /
                ("step_" + std::to_string(state.step) + ".png"))
                   .string(),
               grid.image);
    }
    if (cfg.checkpoint_interval > 0 && state.step % cfg.checkpoint_interval == 0) {
      save("checkpoint_" + std::to_string(state.step) + ".ckpt");
      save("latest.ckpt");
    }
    if (options.on_step && !options.on_step(state, losses)) break;
  }
  save("latest.ckpt");
}

}  // namespace lrgan
