#include "lrgan/losses.hpp"

#include "lrgan/error.hpp"

#include <cmath>

namespace lrgan {

namespace F = torch::nn::functional;

namespace {

torch::Tensor zeros_diff(const torch::Tensor& img, int64_t lr_size) {
  return torch::zeros({img.size(0), img.size(1), lr_size, lr_size}, img.options());
}

torch::Tensor zeros_diff_like_target(const torch::Tensor& img, const torch::Tensor& target) {
  return torch::zeros({img.size(0), img.size(1), target.size(2), target.size(3)}, img.options());
}

torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean(); }

}  // namespace

bool LossBundle::finite() const {
  for (double v : {adv_d, adv_g, cyc, rec, r1, total_g, total_d, consistency}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

AdversarialPair adversarial_loss_pair(const DiscriminatorFn& d, const torch::Tensor& real_a,
                                      const torch::Tensor& real_b, const torch::Tensor& fake,
                                      const torch::Tensor& target_lr, double color_step) {
  const auto la = d(real_a, zeros_diff_like_target(real_a, target_lr));
  const auto lb = d(real_b, zeros_diff_like_target(real_b, target_lr));
  const auto lf = d(fake, lr_difference(fake, target_lr, color_step));
  auto objective = F::logsigmoid(la).mean() + F::logsigmoid(lb).mean() + F::logsigmoid(-lf).mean();
  auto g_loss = -F::logsigmoid(lf).mean();
  return {objective, -objective, g_loss};
}

AdversarialTerms overall_adversarial(const DiscriminatorFn& d, const TranslationSet& t,
                                     double color_step, bool detach_fakes) {
  const auto prep = [&](const torch::Tensor& f) { return detach_fakes ? f.detach() : f; };
  const auto lx = d(t.x, torch::zeros_like(t.x_lr));
  const auto ly = d(t.y, torch::zeros_like(t.y_lr));
  const auto real_term = F::logsigmoid(lx).mean() + F::logsigmoid(ly).mean();

  struct Group {
    const char* label;
    const torch::Tensor& fake;
    const torch::Tensor& target;
  };
  const Group groups[] = {{"X|Y_x", t.y_x, t.x_lr},
                          {"X|X_rec", t.x_rec, t.x_lr},
                          {"Y|X_y", t.x_y, t.y_lr},
                          {"Y|Y_rec", t.y_rec, t.y_lr}};

  AdversarialTerms out;
  out.objective = torch::zeros({}, t.x.options());
  out.g_loss = torch::zeros({}, t.x.options());
  for (const auto& g : groups) {
    const auto fake = prep(g.fake);
    const auto lf = d(fake, lr_difference(fake, g.target, color_step));
    out.objective = out.objective + real_term + F::logsigmoid(-lf).mean();
    out.g_loss = out.g_loss - F::logsigmoid(lf).mean();
    out.groups.emplace_back(g.label);
  }
  out.d_loss = -out.objective;
  out.real_logits_x = lx;
  out.real_logits_y = ly;
  return out;
}

torch::Tensor generator_adversarial(const DiscriminatorFn& d, const TranslationSet& t,
                                    double color_step) {
  auto loss = torch::zeros({}, t.x.options());
  const std::pair<const torch::Tensor*, const torch::Tensor*> groups[] = {
      {&t.y_x, &t.x_lr}, {&t.x_rec, &t.x_lr}, {&t.x_y, &t.y_lr}, {&t.y_rec, &t.y_lr}};
  for (const auto& [fake, target] : groups) {
    loss = loss - F::logsigmoid(d(*fake, lr_difference(*fake, *target, color_step))).mean();
  }
  return loss;
}

torch::Tensor cycle_loss(const GeneratorFn& g, const torch::Tensor& x, const torch::Tensor& y,
                         int64_t lr_size) {
  const auto x_lr = downscale_to(x, lr_size, lr_size);
  const auto y_lr = downscale_to(y, lr_size, lr_size);
  const auto x_rec = g(g(x, y_lr), x_lr);
  const auto y_rec = g(g(y, x_lr), y_lr);
  return l1(x, x_rec) + l1(y, y_rec);
}

torch::Tensor enumerated_cycle_loss(const GeneratorFn& g, const TranslationSet& t,
                                    int64_t lr_size) {
  return cycle_loss(g, t.x, t.y_x, lr_size) + cycle_loss(g, t.x, t.x_rec, lr_size) +
         cycle_loss(g, t.y, t.y_x, lr_size) + cycle_loss(g, t.y, t.y_rec, lr_size);
}

torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_rec,
                                  const torch::Tensor& y, const torch::Tensor& y_rec) {
  return l1(x, x_rec) + l1(y, y_rec);
}

torch::Tensor r1_penalty_from_logits(const torch::Tensor& logits, const torch::Tensor& real,
                                     double gamma) {
  if (!real.requires_grad()) {
    throw ContractViolation("r1_penalty: real batch must require grad");
  }
  const auto grads = torch::autograd::grad({logits.sum()}, {real}, /*grad_outputs=*/{},
                                           /*retain_graph=*/true, /*create_graph=*/true,
                                           /*allow_unused=*/true);
  if (!grads[0].defined()) return torch::zeros({}, real.options());
  return 0.5 * gamma * grads[0].pow(2).flatten(1).sum(1).mean();
}

torch::Tensor r1_penalty(const DiscriminatorFn& d, const torch::Tensor& real, double gamma,
                         int64_t lr_size) {
  auto input = real.detach().requires_grad_(true);
  const auto logits = d(input, zeros_diff(input, lr_size));
  return r1_penalty_from_logits(logits, input, gamma);
}

}  // namespace lrgan
