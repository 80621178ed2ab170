#pragma once

// Normalization layers of the generator: instance norm, positional norm with
// moment extraction, SPAdaIN and the dynamic moment shortcut.

#include "lrgan/spectral_norm.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <utility>

namespace lrgan {

inline constexpr double kNormEpsilon = 1e-5;

/// Per-position moments removed by positional normalization.
/// Both tensors are [batch, 1, h, w]; sigma is a standard deviation.
struct MomentPair {
  torch::Tensor mu;
  torch::Tensor sigma;
};

/// Zero mean / unit std per (sample, channel) over the spatial dims.
torch::Tensor instance_norm(const torch::Tensor& f, double eps = kNormEpsilon);

/// Zero mean / unit std across channels at each spatial position.
std::pair<torch::Tensor, MomentPair> pono(const torch::Tensor& f, double eps = kNormEpsilon);

/// Bilinearly resizes both moments to h x w.
MomentPair resize_moments(const MomentPair& m, int64_t h, int64_t w);

/// Spatially adaptive instance normalization:
///   out = gamma(cond) * instance_norm(f) + beta(cond)
/// gamma and beta come from a shared 3x3 conv trunk followed by two 3x3 heads.
/// `cond` must already have f's spatial size.
class SpadainImpl : public torch::nn::Module {
 public:
  SpadainImpl(int64_t channels, int64_t cond_channels = 3);

  torch::Tensor forward(const torch::Tensor& f, const torch::Tensor& cond);

  /// gamma and beta for a given conditioning map.
  std::pair<torch::Tensor, torch::Tensor> modulation(const torch::Tensor& cond);

  SNConv2d trunk{nullptr};
  SNConv2d gamma_head{nullptr};
  SNConv2d beta_head{nullptr};
};
TORCH_MODULE(Spadain);

/// out = gamma(mu, sigma) * f + beta(mu, sigma), with gamma/beta produced by
/// 3x3 convolutions over the stacked moments.
class DynamicMomentShortcutImpl : public torch::nn::Module {
 public:
  explicit DynamicMomentShortcutImpl(int64_t channels);

  torch::Tensor forward(const torch::Tensor& f, const MomentPair& m);

  SNConv2d gamma_conv{nullptr};
  SNConv2d beta_conv{nullptr};
};
TORCH_MODULE(DynamicMomentShortcut);

}  // namespace lrgan
