#include "gradient_checks.hpp"
#include "oracles.hpp"

#include "lrgan/error.hpp"
#include "lrgan/norm.hpp"
#include "lrgan/spectral_norm.hpp"

#include <gtest/gtest.h>

using namespace lrgan;

TEST(InstanceNorm, ConstantChannelBecomesZero) {
  const auto f = torch::full({2, 3, 4, 4}, 5.0);
  EXPECT_EQ(instance_norm(f).abs().max().item<double>(), 0.0);
}

TEST(InstanceNorm, UnitPatternPreserved) {
  const auto f = torch::tensor({-1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0}, torch::kDouble).reshape({1, 1, 2, 4});
  EXPECT_LT((instance_norm(f) - f).abs().max().item<double>(), 1e-5);
}

TEST(InstanceNorm, RandomMapIsStandardized) {
  torch::manual_seed(1);
  const auto out = instance_norm(torch::randn({3, 5, 16, 16}) * 4 + 2);
  EXPECT_LT(out.mean({2, 3}).abs().max().item<double>(), 1e-5);
  EXPECT_LT((out.std({2, 3}, false) - 1).abs().max().item<double>(), 1e-3);
}

TEST(InstanceNorm, InvariantToPerChannelAffine) {
  torch::manual_seed(2);
  const auto f = torch::randn({2, 4, 8, 8}, torch::kDouble);
  const auto scale = torch::rand({2, 4, 1, 1}, torch::kDouble) * 3 + 0.5;
  const auto shift = torch::randn({2, 4, 1, 1}, torch::kDouble);
  const auto g = f * scale + shift;
  // Exact without the stabilizer.
  EXPECT_LT((instance_norm(g, 0.0) - instance_norm(f, 0.0)).abs().max().item<double>(), 1e-5);
  // With it, the scaled input sees eps / scale^2: s (x - mu) / sqrt(s^2 var + eps).
  const auto mu = f.mean({2, 3}, true);
  const auto var = (f - mu).pow(2).mean({2, 3}, true);
  const auto expected = scale * (f - mu) / (scale * scale * var + kNormEpsilon).sqrt();
  EXPECT_LT((instance_norm(g) - expected).abs().max().item<double>(), 1e-9);
}

TEST(InstanceNorm, RejectsSinglePixel) {
  EXPECT_THROW(instance_norm(torch::zeros({1, 2, 1, 1})), ContractViolation);
}

TEST(Pono, TwoPointNormalization) {
  const auto f = torch::tensor({1.0, 3.0}, torch::kDouble).reshape({1, 2, 1, 1});
  auto [n, m] = pono(f);
  EXPECT_NEAR(n[0][0][0][0].item<double>(), -1.0, 1e-5);
  EXPECT_NEAR(n[0][1][0][0].item<double>(), 1.0, 1e-5);
  EXPECT_NEAR(m.mu.item<double>(), 2.0, 1e-12);
  EXPECT_NEAR(m.sigma.item<double>(), 1.0, 1e-5);
}

TEST(Pono, IdempotentOnNormalizedInput) {
  torch::manual_seed(3);
  // Zero mean, unit population variance across channels at every position.
  auto f = torch::randn({2, 8, 5, 5}, torch::kDouble);
  f = (f - f.mean(1, true)) / f.var(1, /*unbiased=*/false, /*keepdim=*/true).sqrt();
  auto [once, m] = pono(f);
  EXPECT_LT(m.mu.abs().max().item<double>(), 1e-9);
  EXPECT_LT((m.sigma - 1).abs().max().item<double>(), 1e-5);
  EXPECT_LT((pono(once).first - once).abs().max().item<double>(), 1e-5);
}

TEST(Pono, InverseReconstruction) {
  torch::manual_seed(4);
  for (int k = 0; k < 10; ++k) {
    const auto f = torch::randn({2, 6, 7, 7}) * (k + 1);
    auto [n, m] = pono(f);
    EXPECT_LT((n * m.sigma + m.mu - f).abs().max().item<double>(), 1e-5 * (k + 1));
    EXPECT_GE(m.sigma.min().item<double>(), std::sqrt(kNormEpsilon) - 1e-9);
    EXPECT_EQ(m.mu.sizes(), (std::vector<int64_t>{2, 1, 7, 7}));
  }
}

TEST(Pono, InvariantToPerPositionAffine) {
  torch::manual_seed(5);
  const auto f = torch::randn({2, 4, 6, 6}, torch::kDouble);
  const auto scale = torch::rand({2, 1, 6, 6}, torch::kDouble) * 2 + 0.5;
  const auto shift = torch::randn({2, 1, 6, 6}, torch::kDouble);
  const auto g = f * scale + shift;
  EXPECT_LT((pono(g, 0.0).first - pono(f, 0.0).first).abs().max().item<double>(), 1e-5);
  const auto mu = f.mean(1, true);
  const auto var = (f - mu).pow(2).mean(1, true);
  const auto expected = scale * (f - mu) / (scale * scale * var + kNormEpsilon).sqrt();
  EXPECT_LT((pono(g).first - expected).abs().max().item<double>(), 1e-9);
}

TEST(Pono, RequiresTwoChannels) { EXPECT_THROW(pono(torch::zeros({1, 1, 4, 4})), ContractViolation); }

TEST(Spadain, IdentityModulation) {
  Spadain layer(4);
  layer->eval();
  {
    torch::NoGradGuard g;
    for (auto* conv : {&layer->gamma_head, &layer->beta_head}) (*conv)->weight.zero_();
    layer->gamma_head->bias.fill_(1.0);
    layer->beta_head->bias.zero_();
  }
  const auto f = torch::randn({2, 4, 8, 8});
  const auto cond = torch::rand({2, 3, 8, 8});
  EXPECT_LT((layer->forward(f, cond) - instance_norm(f)).abs().max().item<double>(), 1e-6);
}

TEST(Spadain, ZeroGammaOverridesFeatures) {
  Spadain layer(4);
  layer->eval();
  {
    torch::NoGradGuard g;
    layer->gamma_head->weight.zero_();
    layer->gamma_head->bias.zero_();
  }
  const auto cond = torch::rand({2, 3, 8, 8});
  const auto a = layer->forward(torch::randn({2, 4, 8, 8}), cond);
  const auto b = layer->forward(torch::randn({2, 4, 8, 8}), cond);
  EXPECT_LT((a - b).abs().max().item<double>(), 1e-6);
  EXPECT_LT((a - layer->modulation(cond).second).abs().max().item<double>(), 1e-6);
}

TEST(Spadain, ConditionChangesOutput) {
  torch::manual_seed(6);
  Spadain layer(4);
  layer->eval();
  const auto f = torch::randn({1, 4, 8, 8});
  const auto a = layer->forward(f, torch::rand({1, 3, 8, 8}) * 2 - 1);
  const auto b = layer->forward(f, torch::rand({1, 3, 8, 8}) * 2 - 1);
  EXPECT_GT((a - b).abs().max().item<double>(), 1e-3);
}

TEST(Spadain, SpatialMismatchIsContractViolation) {
  Spadain layer(4);
  EXPECT_THROW(layer->forward(torch::randn({1, 4, 8, 8}), torch::rand({1, 3, 4, 4})), ContractViolation);
}

TEST(MomentShortcut, IdentityConfiguration) {
  DynamicMomentShortcut layer(5);
  layer->eval();
  {
    torch::NoGradGuard g;
    layer->gamma_conv->weight.zero_();
    layer->beta_conv->weight.zero_();
    layer->gamma_conv->bias.fill_(1.0);
    layer->beta_conv->bias.zero_();
  }
  const auto f = torch::randn({2, 5, 4, 4});
  const MomentPair m{torch::randn({2, 1, 4, 4}), torch::rand({2, 1, 4, 4}) + 0.1};
  EXPECT_LT((layer->forward(f, m) - f).abs().max().item<double>(), 1e-6);
}

TEST(MomentShortcut, ConstantOverride) {
  DynamicMomentShortcut layer(3);
  layer->eval();
  {
    torch::NoGradGuard g;
    layer->gamma_conv->weight.zero_();
    layer->beta_conv->weight.zero_();
    layer->gamma_conv->bias.zero_();
    layer->beta_conv->bias.copy_(torch::tensor({0.5, -0.25, 2.0}));
  }
  const auto out = layer->forward(torch::randn({1, 3, 4, 4}), {torch::randn({1, 1, 4, 4}), torch::rand({1, 1, 4, 4})});
  for (int64_t c = 0; c < 3; ++c) {
    const double expected = std::vector<double>{0.5, -0.25, 2.0}[static_cast<size_t>(c)];
    EXPECT_LT((out[0][c] - expected).abs().max().item<double>(), 1e-6);
  }
}

TEST(GradientSuites, NormLayersMatchCentralDifferences) {
  for (const auto& r : {gradcheck::instance_norm_suite(20, 11), gradcheck::pono_suite(20, 12),
                        gradcheck::spadain_suite(20, 13), gradcheck::moment_shortcut_suite(20, 14)}) {
    EXPECT_LE(r.worst_relative_error, 1e-4) << r.name;
  }
}

TEST(SpectralNorm, DiagonalMatrix) {
  const auto w = torch::diag(torch::tensor({3.0, 1.0}, torch::kDouble));
  auto state = make_power_iteration_state(w, 50);
  const auto out = spectral_normalize(w, state, 1);
  EXPECT_NEAR(out[0][0].item<double>(), 1.0, 1e-9);
  EXPECT_NEAR(out[1][1].item<double>(), 1.0 / 3.0, 1e-9);
  EXPECT_EQ(out[0][1].item<double>(), 0.0);
}

TEST(SpectralNorm, OrthogonalUnchanged) {
  torch::manual_seed(7);
  const auto q = std::get<0>(torch::linalg_qr(torch::randn({6, 6}, torch::kDouble)));
  auto state = make_power_iteration_state(q, 50);
  EXPECT_LT((spectral_normalize(q, state, 1) - q).abs().max().item<double>(), 1e-9);
}

TEST(SpectralNorm, RandomMatrixAgainstSvd) {
  // 50 iterations from a random start. The estimate never exceeds the true
  // value, and it reaches 1e-3 whenever the top two singular values are
  // separated (ratio <= 0.95); nearly degenerate draws converge more slowly.
  torch::manual_seed(8);
  int separated = 0;
  for (int k = 0; k < 10; ++k) {
    const auto w = torch::randn({16, 32}, torch::kDouble);
    const auto s = torch::linalg_svdvals(w);
    const double ratio = s[1].item<double>() / s[0].item<double>();
    auto state = make_power_iteration_state(w, 0);
    const auto out = spectral_normalize(w, state, 50);
    const double top = largest_singular_value(out);
    EXPECT_GE(top, 1.0 - 1e-12);
    EXPECT_NEAR(oracle::top_singular_value(out), top, 1e-9);
    if (ratio <= 0.95) {
      ++separated;
      EXPECT_NEAR(top, 1.0, 1e-3) << "ratio " << ratio;
    }
  }
  EXPECT_GE(separated, 5);
}

TEST(SpectralNorm, RandomMatrixConvergesWithMoreIterations) {
  torch::manual_seed(8);
  for (int k = 0; k < 10; ++k) {
    const auto w = torch::randn({16, 32}, torch::kDouble);
    auto state = make_power_iteration_state(w, 0);
    EXPECT_NEAR(largest_singular_value(spectral_normalize(w, state, 500)), 1.0, 1e-3);
  }
}

TEST(SpectralNorm, RefreshTracksUpdatedWeight) {
  torch::manual_seed(10);
  auto w = torch::randn({16, 72}, torch::kDouble);
  auto state = exact_power_iteration_state(w);
  EXPECT_NEAR(largest_singular_value(spectral_normalize(w, state, 0, false)), 1.0, 1e-9);
  w = w + 0.05 * torch::randn_like(w);
  const int used = refresh_power_iteration(w, state);
  EXPECT_GE(used, 1);
  EXPECT_LE(largest_singular_value(spectral_normalize(w, state, 0, false)), 1.0 + 1e-3);
}

TEST(SpectralNorm, StateUpdatesOnlyInTraining) {
  SNConv2d conv(4, 6, 3);
  const auto u0 = conv->u.clone();
  conv->eval();
  conv->forward(torch::randn({1, 4, 5, 5}));
  EXPECT_TRUE(torch::equal(conv->u, u0));
  conv->train();
  {
    torch::NoGradGuard g;
    conv->weight.add_(torch::randn_like(conv->weight));
  }
  conv->forward(torch::randn({1, 4, 5, 5}));
  EXPECT_FALSE(torch::equal(conv->u, u0));
}

TEST(SpectralNorm, EffectiveWeightsBoundedAtConstruction) {
  torch::manual_seed(9);
  for (int k = 0; k < 10; ++k) {
    SNConv2d conv(8, 16, 3);
    EXPECT_LE(largest_singular_value(conv->effective_weight()), 1.0 + 1e-3);
  }
  SNLinear lin(32, 1);
  EXPECT_LE(largest_singular_value(lin->effective_weight()), 1.0 + 1e-3);
}

TEST(SpectralNorm, ZeroWeightKeepsState) {
  auto w = torch::zeros({3, 4});
  PowerIterationState state{torch::tensor({1.0f, 0.0f, 0.0f}), torch::tensor({1.0f, 0.0f, 0.0f, 0.0f})};
  const auto out = spectral_normalize(w, state, 1);
  EXPECT_TRUE(torch::isfinite(out).all().item<bool>());
  EXPECT_EQ(state.u[0].item<float>(), 1.0f);
}
