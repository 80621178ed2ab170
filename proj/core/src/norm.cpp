#include "lrgan/norm.hpp"

#include "lrgan/error.hpp"
#include "lrgan/imaging.hpp"

#include <string>

namespace lrgan {

namespace F = torch::nn::functional;

namespace {

void require_same_hw(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
  if (a.size(2) != b.size(2) || a.size(3) != b.size(3) || a.size(0) != b.size(0)) {
    throw ContractViolation(std::string(who) + ": spatial/batch mismatch (" +
                            std::to_string(a.size(2)) + "x" + std::to_string(a.size(3)) +
                            " vs " + std::to_string(b.size(2)) + "x" + std::to_string(b.size(3)) +
                            ")");
  }
}

}  // namespace

torch::Tensor instance_norm(const torch::Tensor& f, double eps) {
  if (f.dim() != 4 || f.size(2) * f.size(3) < 2) {
    throw ContractViolation("instance_norm needs NCHW input with h*w > 1");
  }
  const auto mean = f.mean({2, 3}, /*keepdim=*/true);
  const auto var = f.var({2, 3}, /*unbiased=*/false, /*keepdim=*/true);
  return (f - mean) / torch::sqrt(var + eps);
}

std::pair<torch::Tensor, MomentPair> pono(const torch::Tensor& f, double eps) {
  if (f.dim() != 4 || f.size(1) < 2) {
    throw ContractViolation("pono needs NCHW input with at least two channels");
  }
  auto mu = f.mean(1, /*keepdim=*/true);
  auto sigma = torch::sqrt(f.var(1, /*unbiased=*/false, /*keepdim=*/true) + eps);
  auto normalized = (f - mu) / sigma;
  return {normalized, MomentPair{mu, sigma}};
}

MomentPair resize_moments(const MomentPair& m, int64_t h, int64_t w) {
  return {upsample_bilinear(m.mu, h, w), upsample_bilinear(m.sigma, h, w)};
}

SpadainImpl::SpadainImpl(int64_t channels, int64_t cond_channels) {
  trunk = register_module("trunk", SNConv2d(cond_channels, channels, 3));
  gamma_head = register_module("gamma_head", SNConv2d(channels, channels, 3));
  beta_head = register_module("beta_head", SNConv2d(channels, channels, 3));
  torch::NoGradGuard no_grad;
  gamma_head->bias.fill_(1.0);
}

std::pair<torch::Tensor, torch::Tensor> SpadainImpl::modulation(const torch::Tensor& cond) {
  const auto hidden = F::leaky_relu(trunk(cond), F::LeakyReLUFuncOptions().negative_slope(0.2));
  return {gamma_head(hidden), beta_head(hidden)};
}

torch::Tensor SpadainImpl::forward(const torch::Tensor& f, const torch::Tensor& cond) {
  require_same_hw(f, cond, "spadain");
  auto [gamma, beta] = modulation(cond);
  return gamma * instance_norm(f) + beta;
}

DynamicMomentShortcutImpl::DynamicMomentShortcutImpl(int64_t channels) {
  gamma_conv = register_module("gamma_conv", SNConv2d(2, channels, 3));
  beta_conv = register_module("beta_conv", SNConv2d(2, channels, 3));
  torch::NoGradGuard no_grad;
  gamma_conv->bias.fill_(1.0);
}

torch::Tensor DynamicMomentShortcutImpl::forward(const torch::Tensor& f, const MomentPair& m) {
  require_same_hw(f, m.mu, "dynamic_moment_shortcut");
  require_same_hw(f, m.sigma, "dynamic_moment_shortcut");
  const auto moments = torch::cat({m.mu, m.sigma}, 1);
  return gamma_conv(moments) * f + beta_conv(moments);
}

}  // namespace lrgan
