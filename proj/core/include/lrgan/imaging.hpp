#pragma once

// Differentiable image kernels shared by the generator, the losses and the
// evaluation code. All tensors are NCHW with values nominally in [-1, 1].

#include <torch/torch.h>

#include <cstdint>

namespace lrgan {

/// Default colour resolution: one 8-bit step expressed on the [-1, 1] scale.
inline constexpr double kColorStep = 2.0 / 255.0;

/// Average-pools non-overlapping factor x factor blocks.
/// Throws ConfigError when factor does not divide H and W.
torch::Tensor downscale(const torch::Tensor& img, int64_t factor);

/// Downscale to an explicit LR size; H/lr_h and W/lr_w must be integral and equal.
torch::Tensor downscale_to(const torch::Tensor& img, int64_t lr_h, int64_t lr_w);

/// Integer scale factor between an HR tensor and an LR tensor (NCHW).
/// Throws ContractViolation on non-integral or anisotropic ratios.
int64_t scale_factor(const torch::Tensor& hr, const torch::Tensor& lr);

/// Rounds every value to the nearest multiple of `step` (ties away from zero).
/// The backward pass is the identity (straight-through estimator).
torch::Tensor quantize_to_color_grid(const torch::Tensor& img, double step = kColorStep);

/// Absolute difference between `target` and the quantized downscale of
/// `generated`, in units of colour steps. Gradients reach `generated` through
/// the straight-through quantizer.
torch::Tensor lr_difference(const torch::Tensor& generated, const torch::Tensor& target,
                            double step = kColorStep);

/// ||a - b||_p over all elements.
double subspace_distance(const torch::Tensor& a, const torch::Tensor& b, double p = 1.0);

/// True when `candidate` lies in the LR neighbourhood of radius epsilon around `target`.
bool in_subspace(const torch::Tensor& candidate, const torch::Tensor& target, double epsilon = 0.0,
                 double p = 1.0);

/// Bilinear resampling (half-pixel centres). Identity when sizes already match.
torch::Tensor upsample_bilinear(const torch::Tensor& lr, int64_t target_h, int64_t target_w);

}  // namespace lrgan
