#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace lrgan {

/// Persistent power-iteration vectors for one weight. `u` lives in the output
/// space (rows of the 2-D reshaped weight), `v` in the input space.
struct PowerIterationState {
  torch::Tensor u;
  torch::Tensor v;
};

/// Fresh state for a weight: random unit `u`, then `warmup` power iterations.
PowerIterationState make_power_iteration_state(const torch::Tensor& weight, int warmup = 20);

/// State holding the exact top singular vectors (via SVD); used at layer construction.
PowerIterationState exact_power_iteration_state(const torch::Tensor& weight);

/// Runs power iterations on the current weight until the singular-pair
/// residual drops below `tolerance`, falling back to an SVD when
/// `max_iterations` is not enough. Writes the vectors back; returns the
/// iterations used.
int refresh_power_iteration(const torch::Tensor& weight, PowerIterationState& state,
                            int max_iterations = 50, double tolerance = 1e-4);

/// Divides `weight` by its largest singular value (weight reshaped to
/// out_features x rest), estimated with `iterations` power-iteration steps
/// starting from `state`. When `update_state` is set the refined vectors are
/// written back into `state` in place. Gradients flow through `weight` only.
torch::Tensor spectral_normalize(const torch::Tensor& weight, PowerIterationState& state,
                                 int iterations = 1, bool update_state = true);

/// Largest singular value of the reshaped weight, via full SVD. Test/diagnostic use.
double largest_singular_value(const torch::Tensor& weight);

/// Conv2d whose effective weight is spectrally normalized on every forward.
/// In training mode each forward runs `power_iterations` steps and updates the
/// stored vectors; in eval mode the stored vectors are used as-is.
class SNConv2dImpl : public torch::nn::Module {
 public:
  SNConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel_size,
               int64_t padding = -1, bool bias = true);

  torch::Tensor forward(const torch::Tensor& x);

  /// Normalized weight as the next eval-mode forward would use it.
  torch::Tensor effective_weight() const;
  /// Re-converges the stored vectors to the current weight.
  void refresh(int max_iterations = 50, double tolerance = 1e-4);

  torch::Tensor weight;
  torch::Tensor bias;
  torch::Tensor u;
  torch::Tensor v;
  int power_iterations = 1;

 private:
  int64_t padding_;
};
TORCH_MODULE(SNConv2d);

class SNLinearImpl : public torch::nn::Module {
 public:
  SNLinearImpl(int64_t in_features, int64_t out_features, bool bias = true);

  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor effective_weight() const;
  void refresh(int max_iterations = 50, double tolerance = 1e-4);

  torch::Tensor weight;
  torch::Tensor bias;
  torch::Tensor u;
  torch::Tensor v;
  int power_iterations = 1;
};
TORCH_MODULE(SNLinear);

/// Refreshes every spectrally normalized layer inside `module`. Called after
/// each optimizer step so the stored vectors track the updated weights.
void refresh_spectral_norms(torch::nn::Module& module);

}  // namespace lrgan
