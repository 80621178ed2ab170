#include "gradient_checks.hpp"
#include "oracles.hpp"

#include "lrgan/imaging.hpp"
#include "lrgan/losses.hpp"
#include "lrgan/networks.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lrgan;

namespace {

torch::Tensor rand_img(int64_t n, int64_t s) { return torch::rand({n, 3, s, s}, torch::kDouble) * 2 - 1; }

// A critic whose logit is zero everywhere: probability 0.5.
DiscriminatorFn half_critic(int* calls = nullptr) {
  return [calls](const torch::Tensor& img, const torch::Tensor& diff) {
    if (calls) ++*calls;
    return (img.flatten(1).sum(1) + diff.flatten(1).sum(1)) * 0.0;
  };
}

TranslationSet make_set(const GeneratorFn& g, const torch::Tensor& x, const torch::Tensor& y, int64_t lr) {
  TranslationSet t;
  t.x = x;
  t.y = y;
  t.x_lr = downscale_to(x, lr, lr);
  t.y_lr = downscale_to(y, lr, lr);
  t.x_y = g(x, t.y_lr);
  t.y_x = g(y, t.x_lr);
  t.x_rec = g(t.x_y, t.x_lr);
  t.y_rec = g(t.y_x, t.y_lr);
  return t;
}

}  // namespace

TEST(Adversarial, HalfProbabilityCriticGivesThreeLogHalf) {
  torch::manual_seed(1);
  const auto p = adversarial_loss_pair(half_critic(), rand_img(4, 16), rand_img(4, 16), rand_img(4, 16),
                                       rand_img(4, 4));
  EXPECT_NEAR(p.objective.item<double>(), 3.0 * std::log(0.5), 1e-9);
  EXPECT_NEAR(p.objective.item<double>(), -2.0794, 1e-4);
  EXPECT_NEAR(p.d_loss.item<double>(), -3.0 * std::log(0.5), 1e-9);
  EXPECT_NEAR(p.g_loss.item<double>(), -std::log(0.5), 1e-9);
}

TEST(Adversarial, MatchesScalarLogSigmoidOracle) {
  torch::manual_seed(2);
  Discriminator d(DiscriminatorSpec{16, 4, 4, 8, 3});
  d->to(torch::kDouble);
  d->eval();
  DiscriminatorFn fn = [&](const torch::Tensor& a, const torch::Tensor& b) { return d->forward(a, b); };
  const auto ra = rand_img(3, 16), rb = rand_img(3, 16), fake = rand_img(3, 16), target = rand_img(3, 4);
  const auto p = adversarial_loss_pair(fn, ra, rb, fake, target);
  const auto la = fn(ra, torch::zeros_like(target)), lb = fn(rb, torch::zeros_like(target));
  const auto lf = fn(fake, oracle::lr_difference(fake, target, kColorStep));
  double expected = 0.0;
  for (int64_t i = 0; i < 3; ++i) {
    expected += (oracle::log_sigmoid(la[i].item<double>()) + oracle::log_sigmoid(lb[i].item<double>()) +
                 oracle::log_sigmoid(-lf[i].item<double>())) / 3.0;
  }
  EXPECT_NEAR(p.objective.item<double>(), expected, 1e-6);
}

TEST(Adversarial, ExactFakeSeesZeroDifference) {
  const auto target = quantize_to_color_grid(rand_img(2, 4));
  const auto fake = target.repeat_interleave(4, 2).repeat_interleave(4, 3);
  torch::Tensor seen;
  DiscriminatorFn spy = [&](const torch::Tensor& img, const torch::Tensor& diff) {
    seen = diff;
    return img.flatten(1).mean(1);
  };
  adversarial_loss_pair(spy, rand_img(2, 16), rand_img(2, 16), fake, target);
  EXPECT_EQ(seen.abs().max().item<double>(), 0.0);
}

TEST(Adversarial, StableForExtremeLogits) {
  DiscriminatorFn huge = [](const torch::Tensor& img, const torch::Tensor&) {
    return img.flatten(1).sum(1) * 1e6;
  };
  const auto p = adversarial_loss_pair(huge, rand_img(2, 16), -rand_img(2, 16), rand_img(2, 16), rand_img(2, 4));
  EXPECT_TRUE(std::isfinite(p.objective.item<double>()));
  EXPECT_TRUE(std::isfinite(p.g_loss.item<double>()));
}

TEST(Adversarial, DTermGradientMatchesFiniteDifferences) {
  torch::manual_seed(3);
  Discriminator d(DiscriminatorSpec{8, 2, 2, 4, 3});
  d->to(torch::kDouble);
  d->eval();
  DiscriminatorFn fn = [&](const torch::Tensor& a, const torch::Tensor& b) { return d->forward(a, b); };
  const auto ra = rand_img(2, 8), rb = rand_img(2, 8), fake = rand_img(2, 8), target = rand_img(2, 2);
  auto& w = d->head_linear->weight;
  const auto original = w.detach().clone();
  const auto a = torch::autograd::grad({adversarial_loss_pair(fn, ra, rb, fake, target).d_loss}, {w})[0];
  const auto n = oracle::numeric_gradient(
      [&](const torch::Tensor& v) {
        torch::NoGradGuard g;
        w.copy_(v);
        return adversarial_loss_pair(fn, ra, rb, fake, target).d_loss.item<double>();
      },
      original);
  EXPECT_LE(oracle::relative_error(a, n), 1e-4);
}

TEST(OverallAdversarial, FourFakeGroupsSharingTwoRealCalls) {
  int calls = 0;
  GeneratorFn id = [](const torch::Tensor& x, const torch::Tensor&) { return x; };
  const auto t = make_set(id, rand_img(2, 16), rand_img(2, 16), 4);
  const auto terms = overall_adversarial(half_critic(&calls), t);
  ASSERT_EQ(terms.groups.size(), 4u);
  EXPECT_EQ(terms.groups[0], "X|Y_x");
  EXPECT_EQ(terms.groups[1], "X|X_rec");
  EXPECT_EQ(terms.groups[2], "Y|X_y");
  EXPECT_EQ(terms.groups[3], "Y|Y_rec");
  // Two real calls (X, Y), reused by every group, plus one call per fake.
  EXPECT_EQ(calls, 6);
  EXPECT_NEAR(terms.objective.item<double>(), 4.0 * 3.0 * std::log(0.5), 1e-9);
}

TEST(OverallAdversarial, DetachingFakesLeavesDTermUnchanged) {
  torch::manual_seed(4);
  Generator g(GeneratorSpec{16, 4, 4, 8, 2, 1, 1, 3});
  g->to(torch::kDouble);
  g->eval();
  Discriminator d(DiscriminatorSpec{16, 4, 4, 8, 3});
  d->to(torch::kDouble);
  d->eval();
  GeneratorFn gf = [&](const torch::Tensor& x, const torch::Tensor& lr) { return g->forward(x, lr); };
  DiscriminatorFn df = [&](const torch::Tensor& a, const torch::Tensor& b) { return d->forward(a, b); };
  const auto t = make_set(gf, rand_img(2, 16), rand_img(2, 16), 4);
  const auto attached = overall_adversarial(df, t, kColorStep, false);
  const auto detached = overall_adversarial(df, t, kColorStep, true);
  EXPECT_EQ(attached.d_loss.item<double>(), detached.d_loss.item<double>());
  // No generator gradient through detached fakes.
  const auto params = g->parameters();
  const auto grads = torch::autograd::grad({detached.d_loss}, {params[0]}, {}, false, false, true);
  EXPECT_FALSE(grads[0].defined());
}

TEST(OverallAdversarial, GeneratorSideMatchesGroupSum) {
  torch::manual_seed(5);
  Discriminator d(DiscriminatorSpec{16, 4, 4, 8, 3});
  d->to(torch::kDouble);
  d->eval();
  DiscriminatorFn df = [&](const torch::Tensor& a, const torch::Tensor& b) { return d->forward(a, b); };
  GeneratorFn shift = [](const torch::Tensor& x, const torch::Tensor&) { return x * 0.9; };
  const auto t = make_set(shift, rand_img(2, 16), rand_img(2, 16), 4);
  EXPECT_NEAR(generator_adversarial(df, t).item<double>(), overall_adversarial(df, t).g_loss.item<double>(), 1e-12);
}

TEST(Cycle, IdentityGeneratorIsZero) {
  GeneratorFn id = [](const torch::Tensor& x, const torch::Tensor&) { return x; };
  EXPECT_EQ(cycle_loss(id, rand_img(2, 16), rand_img(2, 16), 4).item<double>(), 0.0);
}

TEST(Cycle, ConstantGeneratorClosedForm) {
  torch::manual_seed(6);
  const double c = 0.3;
  GeneratorFn constant = [c](const torch::Tensor& x, const torch::Tensor&) { return torch::full_like(x, c); };
  const auto x = rand_img(2, 16), y = rand_img(2, 16);
  const double expected = oracle::l1_mean(x, torch::full_like(x, c)) + oracle::l1_mean(y, torch::full_like(y, c));
  EXPECT_NEAR(cycle_loss(constant, x, y, 4).item<double>(), expected, 1e-12);
}

TEST(Cycle, MatchesManualTwoPassComposition) {
  torch::manual_seed(7);
  Generator g(GeneratorSpec{16, 4, 4, 8, 2, 1, 1, 3});
  g->to(torch::kDouble);
  g->eval();
  GeneratorFn gf = [&](const torch::Tensor& x, const torch::Tensor& lr) { return g->forward(x, lr); };
  const auto x = rand_img(2, 16), y = rand_img(2, 16);
  const auto xl = oracle::block_mean(x, 4), yl = oracle::block_mean(y, 4);
  const auto x_rec = g->forward(g->forward(x, yl), xl);
  const auto y_rec = g->forward(g->forward(y, xl), yl);
  const double expected = oracle::l1_mean(x, x_rec) + oracle::l1_mean(y, y_rec);
  g->reset_forward_calls();
  EXPECT_NEAR(cycle_loss(gf, x, y, 4).item<double>(), expected, 1e-6);
  EXPECT_EQ(g->forward_calls(), 4);
}

TEST(Cycle, SymmetricUnderSwap) {
  GeneratorFn mix = [](const torch::Tensor& x, const torch::Tensor& lr) {
    return 0.5 * x + 0.5 * upsample_bilinear(lr, x.size(2), x.size(3));
  };
  const auto x = rand_img(2, 16), y = rand_img(2, 16);
  EXPECT_NEAR(cycle_loss(mix, x, y, 4).item<double>(), cycle_loss(mix, y, x, 4).item<double>(), 1e-12);
}

TEST(Reconstruction, ExactAndOffsetAndOracle) {
  torch::manual_seed(8);
  const auto x = rand_img(2, 16), y = rand_img(2, 16);
  EXPECT_EQ(reconstruction_loss(x, x, y, y).item<double>(), 0.0);
  EXPECT_NEAR(reconstruction_loss(x, x + 0.1, y, y).item<double>(), 0.1, 1e-12);
  const auto xr = rand_img(2, 16), yr = rand_img(2, 16);
  EXPECT_NEAR(reconstruction_loss(x, xr, y, yr).item<double>(), oracle::l1_mean(x, xr) + oracle::l1_mean(y, yr),
              1e-6);
}

TEST(Reconstruction, EnumeratedFormIsSelectableAndFinite) {
  GeneratorFn id = [](const torch::Tensor& x, const torch::Tensor&) { return x; };
  const auto t = make_set(id, rand_img(2, 16), rand_img(2, 16), 4);
  const auto v = enumerated_cycle_loss(id, t, 4).item<double>();
  EXPECT_EQ(v, 0.0);
}

TEST(R1, ConstantCriticIsZero) {
  EXPECT_EQ(r1_penalty(half_critic(), rand_img(2, 16), 0.5, 4).item<double>(), 0.0);
}

TEST(R1, LinearCriticClosedForm) {
  torch::manual_seed(9);
  const auto w = torch::randn({3, 16, 16}, torch::kDouble);
  DiscriminatorFn linear = [&](const torch::Tensor& img, const torch::Tensor&) { return (img * w).flatten(1).sum(1); };
  const double gamma = 0.5;
  EXPECT_NEAR(r1_penalty(linear, rand_img(4, 16), gamma, 4).item<double>(),
              0.5 * gamma * w.pow(2).sum().item<double>(), 1e-9);
}

TEST(R1, MatchesFiniteDifferences) {
  const auto r = gradcheck::r1_suite(5, 10);
  EXPECT_LE(r.worst_relative_error, 1e-4);
}

TEST(LrDifferenceGradient, MatchesFiniteDifferences) {
  EXPECT_LE(gradcheck::lr_difference_suite(20, 11).worst_relative_error, 1e-4);
  EXPECT_TRUE(gradcheck::ste_identity_exact(20, 12));
}

TEST(Losses, FiniteOverRandomBatches) {
  torch::manual_seed(13);
  Generator g(GeneratorSpec{16, 4, 4, 8, 2, 1, 1, 3});
  Discriminator d(DiscriminatorSpec{16, 4, 4, 8, 3});
  GeneratorFn gf = [&](const torch::Tensor& x, const torch::Tensor& lr) { return g->forward(x, lr); };
  DiscriminatorFn df = [&](const torch::Tensor& a, const torch::Tensor& b) { return d->forward(a, b); };
  torch::NoGradGuard no_grad;
  for (int k = 0; k < 50; ++k) {
    const auto x = torch::rand({2, 3, 16, 16}) * 2 - 1, y = torch::rand({2, 3, 16, 16}) * 2 - 1;
    const auto t = make_set(gf, x, y, 4);
    const auto adv = overall_adversarial(df, t);
    EXPECT_TRUE(std::isfinite(adv.d_loss.item<double>()));
    EXPECT_TRUE(std::isfinite(adv.g_loss.item<double>()));
    EXPECT_GE(reconstruction_loss(x, t.x_rec, y, t.y_rec).item<double>(), 0.0);
  }
}

TEST(Losses, DiscriminatorDescentOnFixedBatch) {
  torch::manual_seed(14);
  Discriminator d(DiscriminatorSpec{16, 4, 4, 8, 3});
  d->to(torch::kDouble);
  d->eval();
  DiscriminatorFn df = [&](const torch::Tensor& a, const torch::Tensor& b) { return d->forward(a, b); };
  GeneratorFn shift = [](const torch::Tensor& x, const torch::Tensor&) { return x.flip(3) * 0.5; };
  const auto t = make_set(shift, rand_img(4, 16), rand_img(4, 16), 4);
  const auto before = overall_adversarial(df, t, kColorStep, true).d_loss;
  const auto params = d->parameters();
  const auto grads = torch::autograd::grad({before}, params);
  {
    torch::NoGradGuard g;
    for (size_t i = 0; i < params.size(); ++i) params[i].sub_(1e-4 * grads[i]);
  }
  EXPECT_LT(overall_adversarial(df, t, kColorStep, true).d_loss.item<double>(), before.item<double>());
}
