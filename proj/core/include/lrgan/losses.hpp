#pragma once

// Training objectives. Discriminator and generator are passed as callables so
// the losses can be evaluated against stand-ins (constant or linear critics,
// identity generators) as well as the real networks.

#include "lrgan/imaging.hpp"

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

namespace lrgan {

/// D(img, diff) -> one logit per sample.
using DiscriminatorFn = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;
/// G(source, lr_target) -> HR image.
using GeneratorFn = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

/// Scalar losses of one iteration, for logging.
struct LossBundle {
  double adv_d = 0.0;
  double adv_g = 0.0;
  double cyc = 0.0;
  double rec = 0.0;
  double r1 = 0.0;
  double total_g = 0.0;
  double total_d = 0.0;
  /// mean |DS(G(X|y)) - y| over the two translated images of the iteration.
  double consistency = 0.0;

  bool finite() const;
};

/// One real/real/fake group of the adversarial objective.
struct AdversarialPair {
  /// log D(a, 0) + log D(b, 0) + log(1 - D(fake, d)), batch-mean; D ascends this.
  torch::Tensor objective;
  /// -objective, minimized by the discriminator.
  torch::Tensor d_loss;
  /// Non-saturating generator term -log D(fake, d).
  torch::Tensor g_loss;
};

/// Adversarial objective for one fake aimed at the subspace of `target_lr`,
/// with `real_a` and `real_b` presented alongside an all-zeros difference map.
AdversarialPair adversarial_loss_pair(const DiscriminatorFn& d, const torch::Tensor& real_a,
                                      const torch::Tensor& real_b, const torch::Tensor& fake,
                                      const torch::Tensor& target_lr,
                                      double color_step = kColorStep);

/// Tensors produced by the four generator passes of one iteration.
struct TranslationSet {
  torch::Tensor x;      // X
  torch::Tensor y;      // Y
  torch::Tensor x_y;    // G(X | DS(Y))
  torch::Tensor y_x;    // G(Y | DS(X))
  torch::Tensor x_rec;  // G(X_y | DS(X))
  torch::Tensor y_rec;  // G(Y_x | DS(Y))
  torch::Tensor x_lr;   // DS(X)
  torch::Tensor y_lr;   // DS(Y)
};

struct AdversarialTerms {
  torch::Tensor objective;
  torch::Tensor d_loss;
  torch::Tensor g_loss;
  /// "real|fake" labels of the summed groups, in evaluation order.
  std::vector<std::string> groups;
  /// D(X, 0) and D(Y, 0), kept so R1 can reuse them.
  torch::Tensor real_logits_x;
  torch::Tensor real_logits_y;
};

/// Sum of the four groups (X, Y_x), (X, X_rec), (Y, X_y), (Y, Y_rec). Each
/// fake is scored against the LR version of the real image it should match.
/// Real logits are computed once per real image and shared by all groups.
/// With `detach_fakes` no gradient reaches the generator.
AdversarialTerms overall_adversarial(const DiscriminatorFn& d, const TranslationSet& t,
                                     double color_step = kColorStep, bool detach_fakes = false);

/// Generator side only: sum over the four fakes of -log D(fake, d). Skips the
/// real-image discriminator calls, which carry no generator gradient.
torch::Tensor generator_adversarial(const DiscriminatorFn& d, const TranslationSet& t,
                                    double color_step = kColorStep);

/// ||X - G(G(X|DS(Y)) | DS(X))||_1 + ||Y - G(G(Y|DS(X)) | DS(Y))||_1, mean-reduced.
/// Runs four generator passes.
torch::Tensor cycle_loss(const GeneratorFn& g, const torch::Tensor& x, const torch::Tensor& y,
                         int64_t lr_size);

/// The four-term enumeration (X,Y_x) + (X,X_rec) + (Y,Y_x) + (Y,Y_rec) of
/// two-direction cycle terms. Sixteen generator passes; not used by the
/// default training step, kept selectable through `cycle_form: enumerated`.
torch::Tensor enumerated_cycle_loss(const GeneratorFn& g, const TranslationSet& t,
                                    int64_t lr_size);

/// ||X - X_rec||_1 + ||Y - Y_rec||_1, mean-reduced.
torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_rec,
                                  const torch::Tensor& y, const torch::Tensor& y_rec);

/// (gamma / 2) * E_n ||d D(real_n, 0) / d real_n||^2.
torch::Tensor r1_penalty(const DiscriminatorFn& d, const torch::Tensor& real, double gamma,
                         int64_t lr_size);

/// Same penalty given logits already computed from `real` (which must require grad).
torch::Tensor r1_penalty_from_logits(const torch::Tensor& logits, const torch::Tensor& real,
                                     double gamma);

}  // namespace lrgan
