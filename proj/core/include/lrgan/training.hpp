#pragma once

// The alternating training loop: four generator passes, one discriminator
// update (adversarial + R1), then one generator update, per step.

#include "lrgan/config.hpp"
#include "lrgan/data.hpp"
#include "lrgan/losses.hpp"
#include "lrgan/networks.hpp"

#include <torch/torch.h>

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace lrgan {

struct TrainState {
  TrainConfig config;
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g;
  std::unique_ptr<torch::optim::Adam> opt_d;
  int64_t step = 0;
  int64_t d_updates = 0;
  int64_t g_updates = 0;
  Rng rng;
};

/// Fresh networks and optimizers, seeded from `config.seed`.
TrainState make_train_state(const TrainConfig& config);

/// Runs one iteration on an explicit batch. Throws TrainingDiverged (with the
/// offending loss record in the message) when any loss is non-finite.
LossBundle train_step(TrainState& state, const PairBatch& batch);

/// Samples a batch of pairs with the state's RNG, then runs train_step.
LossBundle train_step(TrainState& state, const Dataset& dataset);

/// Eval-mode translation G(x | lr) without gradient tracking or state updates.
torch::Tensor translate(Generator& generator, const torch::Tensor& x, const torch::Tensor& lr);

std::string loss_record_json(int64_t step, const LossBundle& losses, double steps_per_sec);

struct TrainOptions {
  /// Output directory for checkpoints, loss log and sample grids. Empty: no files.
  std::string out_dir;
  /// Stop after this many steps in this invocation (in addition to max_steps).
  std::optional<int64_t> step_budget;
  /// Called after every step; returning false stops training early.
  std::function<bool(const TrainState&, const LossBundle&)> on_step;
  /// Echo progress every log_interval steps.
  bool verbose = true;
};

/// Resolves the configured dataset: synthetic when data.synthetic_count > 0,
/// otherwise the image tree under data.root. Throws DatasetError when empty.
Dataset resolve_dataset(const TrainConfig& config, Split split = Split::kTrain);

/// Runs train_step until max_steps (or the step budget), writing checkpoints
/// every checkpoint_interval steps plus a final one, a JSON-lines loss log and
/// periodic PNG sample grids. `state` may come from load_checkpoint to resume.
void train(TrainState& state, const Dataset& dataset, const TrainOptions& options = {});

}  // namespace lrgan
