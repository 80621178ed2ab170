#pragma once

// U-shaped generator (positional-norm encoder, SPAdaIN decoder with dynamic
// moment shortcuts) and the difference-conditioned discriminator.

#include "lrgan/norm.hpp"
#include "lrgan/spectral_norm.hpp"

#include <torch/torch.h>

#include <atomic>
#include <cstdint>
#include <vector>

namespace lrgan {

struct GeneratorSpec {
  int64_t hr_size = 128;
  int64_t lr_size = 8;
  int64_t base_channels = 64;
  int64_t max_channels = 512;
  int64_t num_scales = 4;
  int64_t blocks_per_scale = 1;
  int64_t bottleneck_blocks = 2;
  int64_t image_channels = 3;

  /// Throws ConfigError when the dimensions are inconsistent.
  void validate() const;
  int64_t channels_at(int64_t scale) const;
  int64_t bottleneck_size() const { return hr_size >> num_scales; }
};

struct DiscriminatorSpec {
  int64_t hr_size = 128;
  int64_t lr_size = 8;
  int64_t base_channels = 64;
  int64_t max_channels = 512;
  int64_t image_channels = 3;

  void validate() const;
};

/// Pre-activation residual block with instance norm; optional 2x average-pool downsampling.
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int64_t in_channels, int64_t out_channels, bool normalize, bool downsample);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  bool normalize_;
  bool downsample_;
  SNConv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
};
TORCH_MODULE(ResBlock);

/// Encoder block: IN -> conv stack with a residual skip, then positional
/// normalization. The removed moments are returned at the block's input
/// resolution and the normalized features are downsampled by two.
class PonoResBlockImpl : public torch::nn::Module {
 public:
  PonoResBlockImpl(int64_t in_channels, int64_t out_channels);
  std::pair<torch::Tensor, MomentPair> forward(const torch::Tensor& x);

 private:
  SNConv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
};
TORCH_MODULE(PonoResBlock);

/// Decoder block: SPAdaIN conditioned on the upsampled LR target, conv stack
/// with nearest-neighbour 2x upsampling (optional), then a dynamic moment
/// shortcut fed with the matching encoder moments (optional).
class PonoSpadainResBlockImpl : public torch::nn::Module {
 public:
  PonoSpadainResBlockImpl(int64_t in_channels, int64_t out_channels, bool upsample,
                          bool moment_shortcut, int64_t cond_channels);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& lr,
                        const MomentPair* moments);

 private:
  bool upsample_;
  Spadain norm1{nullptr}, norm2{nullptr};
  SNConv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
  DynamicMomentShortcut shortcut{nullptr};
};
TORCH_MODULE(PonoSpadainResBlock);

struct EncoderOutput {
  torch::Tensor bottleneck;
  /// One entry per scale, outermost (highest resolution) first.
  std::vector<MomentPair> moments;
};

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorSpec& spec);

  EncoderOutput encode(const torch::Tensor& x);
  torch::Tensor decode(const torch::Tensor& bottleneck, const std::vector<MomentPair>& moments,
                       const torch::Tensor& lr_target);
  /// G(x | lr_target).
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& lr_target);

  const GeneratorSpec& spec() const { return spec_; }
  /// Number of completed forward() calls since construction or the last reset.
  int64_t forward_calls() const { return forward_calls_.load(); }
  void reset_forward_calls() { forward_calls_ = 0; }

 private:
  GeneratorSpec spec_;
  SNConv2d from_rgb{nullptr};
  torch::nn::ModuleList encoder_extra{nullptr};
  torch::nn::ModuleList encoder_down{nullptr};
  torch::nn::ModuleList encoder_bottleneck{nullptr};
  torch::nn::ModuleList decoder_bottleneck{nullptr};
  torch::nn::ModuleList decoder_up{nullptr};
  torch::nn::ModuleList decoder_extra{nullptr};
  SNConv2d to_rgb{nullptr};
  std::atomic<int64_t> forward_calls_{0};
};
TORCH_MODULE(Generator);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorSpec& spec);

  /// One logit per sample. `diff` is the LR difference map ([N, C, lr, lr]),
  /// concatenated onto the internal feature map with the same spatial size.
  torch::Tensor forward(const torch::Tensor& img, const torch::Tensor& diff);

  const DiscriminatorSpec& spec() const { return spec_; }
  /// Index of the block after which the difference map is injected (-1: before the first block).
  int64_t injection_block() const { return injection_block_; }

  SNConv2d from_rgb{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  SNConv2d head_conv{nullptr};
  SNLinear head_linear{nullptr};

 private:
  DiscriminatorSpec spec_;
  int64_t injection_block_ = -1;
};
TORCH_MODULE(Discriminator);

/// Spectral-norm conv/linear layers reachable from `module`, for diagnostics.
std::vector<torch::Tensor> effective_weights(torch::nn::Module& module);

int64_t parameter_count(const torch::nn::Module& module);

}  // namespace lrgan
