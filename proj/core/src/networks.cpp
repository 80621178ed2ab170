#include "lrgan/networks.hpp"

#include "lrgan/error.hpp"
#include "lrgan/imaging.hpp"

#include <cmath>
#include <string>

namespace lrgan {

namespace F = torch::nn::functional;

namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

torch::Tensor lrelu(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2));
}

torch::Tensor pool2(const torch::Tensor& x) {
  return F::avg_pool2d(x, F::AvgPool2dFuncOptions(2).stride(2));
}

torch::Tensor upsample_nearest2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

// LR conditioning resampled to `size`: bilinear up, or average-pool down.
torch::Tensor condition_at(const torch::Tensor& lr, int64_t size) {
  if (size >= lr.size(2)) return upsample_bilinear(lr, size, size);
  return downscale_to(lr, size, size);
}

}  // namespace

void GeneratorSpec::validate() const {
  if (hr_size <= 0 || lr_size <= 0) throw ConfigError("hr_size and lr_size must be positive");
  if (hr_size % lr_size != 0 || !is_power_of_two(hr_size / lr_size)) {
    throw ConfigError("hr_size must be a power-of-two multiple of lr_size");
  }
  if (num_scales < 1) throw ConfigError("num_scales must be at least 1");
  if (hr_size % (int64_t{1} << num_scales) != 0 || bottleneck_size() < 4) {
    throw ConfigError("num_scales=" + std::to_string(num_scales) + " leaves a bottleneck below 4x4");
  }
  if (base_channels < 2) throw ConfigError("base_channels must be at least 2");
  if (max_channels < base_channels) throw ConfigError("max_channels must be >= base_channels");
  if (blocks_per_scale < 1) throw ConfigError("blocks_per_scale must be at least 1");
  if (bottleneck_blocks < 0) throw ConfigError("bottleneck_blocks must be non-negative");
  if (image_channels < 1) throw ConfigError("image_channels must be positive");
}

int64_t GeneratorSpec::channels_at(int64_t scale) const {
  int64_t c = base_channels;
  for (int64_t s = 0; s < scale && c < max_channels; ++s) c *= 2;
  return std::min(c, max_channels);
}

void DiscriminatorSpec::validate() const {
  if (hr_size <= 0 || lr_size <= 0 || lr_size > hr_size) {
    throw ConfigError("discriminator needs 0 < lr_size <= hr_size");
  }
  if (hr_size % lr_size != 0 || !is_power_of_two(hr_size / lr_size) || !is_power_of_two(hr_size)) {
    throw ConfigError("discriminator sizes must be powers of two with lr_size dividing hr_size");
  }
  if (base_channels < 1 || max_channels < base_channels) {
    throw ConfigError("discriminator channel widths are inconsistent");
  }
}

// --- ResBlock ---------------------------------------------------------------

ResBlockImpl::ResBlockImpl(int64_t in_channels, int64_t out_channels, bool normalize,
                           bool downsample)
    : normalize_(normalize), downsample_(downsample) {
  conv1 = register_module("conv1", SNConv2d(in_channels, in_channels, 3));
  conv2 = register_module("conv2", SNConv2d(in_channels, out_channels, 3));
  if (in_channels != out_channels) {
    skip = register_module("skip", SNConv2d(in_channels, out_channels, 1, 0, false));
  }
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  auto h = normalize_ ? instance_norm(x) : x;
  h = conv1(lrelu(h));
  if (downsample_) h = pool2(h);
  h = normalize_ ? instance_norm(h) : h;
  h = conv2(lrelu(h));
  auto s = skip ? skip(x) : x;
  if (downsample_) s = pool2(s);
  return (h + s) * kInvSqrt2;
}

// --- PonoResBlock -----------------------------------------------------------

PonoResBlockImpl::PonoResBlockImpl(int64_t in_channels, int64_t out_channels) {
  conv1 = register_module("conv1", SNConv2d(in_channels, in_channels, 3));
  conv2 = register_module("conv2", SNConv2d(in_channels, out_channels, 3));
  if (in_channels != out_channels) {
    skip = register_module("skip", SNConv2d(in_channels, out_channels, 1, 0, false));
  }
}

std::pair<torch::Tensor, MomentPair> PonoResBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv1(lrelu(instance_norm(x)));
  h = conv2(lrelu(instance_norm(h)));
  const auto s = skip ? skip(x) : x;
  auto [normalized, moments] = pono((h + s) * kInvSqrt2);
  return {pool2(normalized), moments};
}

// --- PonoSpadainResBlock ----------------------------------------------------

PonoSpadainResBlockImpl::PonoSpadainResBlockImpl(int64_t in_channels, int64_t out_channels,
                                                 bool upsample, bool moment_shortcut,
                                                 int64_t cond_channels)
    : upsample_(upsample) {
  norm1 = register_module("norm1", Spadain(in_channels, cond_channels));
  norm2 = register_module("norm2", Spadain(out_channels, cond_channels));
  conv1 = register_module("conv1", SNConv2d(in_channels, out_channels, 3));
  conv2 = register_module("conv2", SNConv2d(out_channels, out_channels, 3));
  if (in_channels != out_channels) {
    skip = register_module("skip", SNConv2d(in_channels, out_channels, 1, 0, false));
  }
  if (moment_shortcut) {
    shortcut = register_module("shortcut", DynamicMomentShortcut(out_channels));
  }
}

torch::Tensor PonoSpadainResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& lr,
                                               const MomentPair* moments) {
  const auto in_size = x.size(2);
  const auto out_size = upsample_ ? in_size * 2 : in_size;
  auto h = lrelu(norm1(x, condition_at(lr, in_size)));
  if (upsample_) h = upsample_nearest2(h);
  h = conv1(h);
  h = conv2(lrelu(norm2(h, condition_at(lr, out_size))));
  auto s = upsample_ ? upsample_nearest2(x) : x;
  if (skip) s = skip(s);
  auto out = (h + s) * kInvSqrt2;
  if (shortcut) {
    if (moments == nullptr) throw ContractViolation("decoder block expects encoder moments");
    out = shortcut(out, *moments);
  }
  return out;
}

// --- Generator --------------------------------------------------------------

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto scales = spec_.num_scales;
  const auto extra = spec_.blocks_per_scale - 1;
  from_rgb = register_module("from_rgb", SNConv2d(spec_.image_channels, spec_.channels_at(0), 3));

  encoder_extra = register_module("encoder_extra", torch::nn::ModuleList());
  encoder_down = register_module("encoder_down", torch::nn::ModuleList());
  for (int64_t s = 0; s < scales; ++s) {
    for (int64_t k = 0; k < extra; ++k) {
      encoder_extra->push_back(ResBlock(spec_.channels_at(s), spec_.channels_at(s), true, false));
    }
    encoder_down->push_back(PonoResBlock(spec_.channels_at(s), spec_.channels_at(s + 1)));
  }
  const auto inner = spec_.channels_at(scales);
  encoder_bottleneck = register_module("encoder_bottleneck", torch::nn::ModuleList());
  decoder_bottleneck = register_module("decoder_bottleneck", torch::nn::ModuleList());
  for (int64_t k = 0; k < spec_.bottleneck_blocks; ++k) {
    encoder_bottleneck->push_back(ResBlock(inner, inner, true, false));
    decoder_bottleneck->push_back(
        PonoSpadainResBlock(inner, inner, false, false, spec_.image_channels));
  }
  // Decoder modules are stored innermost scale first.
  decoder_up = register_module("decoder_up", torch::nn::ModuleList());
  decoder_extra = register_module("decoder_extra", torch::nn::ModuleList());
  for (int64_t s = scales - 1; s >= 0; --s) {
    decoder_up->push_back(PonoSpadainResBlock(spec_.channels_at(s + 1), spec_.channels_at(s), true,
                                              true, spec_.image_channels));
    for (int64_t k = 0; k < extra; ++k) {
      decoder_extra->push_back(PonoSpadainResBlock(spec_.channels_at(s), spec_.channels_at(s),
                                                   false, false, spec_.image_channels));
    }
  }
  to_rgb = register_module("to_rgb", SNConv2d(spec_.channels_at(0), spec_.image_channels, 1));
}

EncoderOutput GeneratorImpl::encode(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != spec_.image_channels || x.size(2) != spec_.hr_size ||
      x.size(3) != spec_.hr_size) {
    throw ContractViolation("generator input must be [N, " + std::to_string(spec_.image_channels) +
                            ", " + std::to_string(spec_.hr_size) + ", " +
                            std::to_string(spec_.hr_size) + "]");
  }
  const auto extra = spec_.blocks_per_scale - 1;
  EncoderOutput out;
  auto h = from_rgb(x);
  for (int64_t s = 0; s < spec_.num_scales; ++s) {
    for (int64_t k = 0; k < extra; ++k) {
      h = encoder_extra[static_cast<size_t>(s * extra + k)]->as<ResBlock>()->forward(h);
    }
    auto [next, moments] = encoder_down[static_cast<size_t>(s)]->as<PonoResBlock>()->forward(h);
    out.moments.push_back(std::move(moments));
    h = next;
  }
  for (const auto& block : *encoder_bottleneck) h = block->as<ResBlock>()->forward(h);
  out.bottleneck = h;
  return out;
}

torch::Tensor GeneratorImpl::decode(const torch::Tensor& bottleneck,
                                    const std::vector<MomentPair>& moments,
                                    const torch::Tensor& lr_target) {
  if (static_cast<int64_t>(moments.size()) != spec_.num_scales) {
    throw ContractViolation("decoder expects " + std::to_string(spec_.num_scales) +
                            " moment pairs, got " + std::to_string(moments.size()));
  }
  if (lr_target.dim() != 4 || lr_target.size(1) != spec_.image_channels ||
      lr_target.size(2) != spec_.lr_size || lr_target.size(3) != spec_.lr_size) {
    throw ContractViolation("LR target must be [N, " + std::to_string(spec_.image_channels) + ", " +
                            std::to_string(spec_.lr_size) + ", " + std::to_string(spec_.lr_size) +
                            "]");
  }
  if (lr_target.size(0) != bottleneck.size(0)) {
    throw ContractViolation("LR target batch does not match the encoded batch");
  }
  const auto extra = spec_.blocks_per_scale - 1;
  auto h = bottleneck;
  for (const auto& block : *decoder_bottleneck) {
    h = block->as<PonoSpadainResBlock>()->forward(h, lr_target, nullptr);
  }
  for (int64_t i = 0; i < spec_.num_scales; ++i) {
    const auto scale = spec_.num_scales - 1 - i;
    const auto& m = moments[static_cast<size_t>(scale)];
    h = decoder_up[static_cast<size_t>(i)]->as<PonoSpadainResBlock>()->forward(h, lr_target, &m);
    for (int64_t k = 0; k < extra; ++k) {
      h = decoder_extra[static_cast<size_t>(i * extra + k)]->as<PonoSpadainResBlock>()->forward(
          h, lr_target, nullptr);
    }
  }
  return torch::tanh(to_rgb(lrelu(h)));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x, const torch::Tensor& lr_target) {
  auto encoded = encode(x);
  auto out = decode(encoded.bottleneck, encoded.moments, lr_target);
  ++forward_calls_;
  return out;
}

// --- Discriminator ----------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto final_size = std::min<int64_t>(4, spec_.lr_size);
  from_rgb = register_module("from_rgb", SNConv2d(spec_.image_channels, spec_.base_channels, 3));
  blocks = register_module("blocks", torch::nn::ModuleList());
  int64_t size = spec_.hr_size;
  int64_t channels = spec_.base_channels;
  if (size == spec_.lr_size) {
    injection_block_ = -1;
    channels += spec_.image_channels;
  }
  int64_t index = 0;
  while (size > final_size) {
    const auto out_channels = std::min(spec_.max_channels, channels * 2);
    blocks->push_back(ResBlock(channels, out_channels, false, true));
    channels = out_channels;
    size /= 2;
    if (size == spec_.lr_size) {
      injection_block_ = index;
      channels += spec_.image_channels;
    }
    ++index;
  }
  head_conv = register_module("head_conv", SNConv2d(channels, channels, final_size, 0));
  head_linear = register_module("head_linear", SNLinear(channels, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& img, const torch::Tensor& diff) {
  if (img.dim() != 4 || img.size(1) != spec_.image_channels || img.size(2) != spec_.hr_size ||
      img.size(3) != spec_.hr_size) {
    throw ContractViolation("discriminator image must be [N, " +
                            std::to_string(spec_.image_channels) + ", " +
                            std::to_string(spec_.hr_size) + ", " + std::to_string(spec_.hr_size) +
                            "]");
  }
  if (diff.dim() != 4 || diff.size(0) != img.size(0) || diff.size(1) != spec_.image_channels ||
      diff.size(2) != spec_.lr_size || diff.size(3) != spec_.lr_size) {
    throw ContractViolation("difference map must be [N, " + std::to_string(spec_.image_channels) +
                            ", " + std::to_string(spec_.lr_size) + ", " +
                            std::to_string(spec_.lr_size) + "]");
  }
  auto h = from_rgb(img);
  if (injection_block_ == -1) h = torch::cat({h, diff}, 1);
  for (size_t i = 0; i < blocks->size(); ++i) {
    h = blocks[i]->as<ResBlock>()->forward(h);
    if (static_cast<int64_t>(i) == injection_block_) h = torch::cat({h, diff}, 1);
  }
  h = lrelu(head_conv(lrelu(h)));
  return head_linear(h.flatten(1)).squeeze(1);
}

std::vector<torch::Tensor> effective_weights(torch::nn::Module& module) {
  std::vector<torch::Tensor> out;
  for (const auto& m : module.modules(/*include_self=*/true)) {
    if (const auto* conv = m->as<SNConv2dImpl>()) out.push_back(conv->effective_weight());
    if (const auto* lin = m->as<SNLinearImpl>()) out.push_back(lin->effective_weight());
  }
  return out;
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace lrgan
