#include "lrgan/imaging.hpp"

#include "lrgan/error.hpp"

#include <string>

namespace lrgan {

namespace F = torch::nn::functional;

namespace {

void require_4d(const torch::Tensor& t, const char* what) {
  if (t.dim() != 4) {
    throw ContractViolation(std::string(what) + " must be NCHW, got " + std::to_string(t.dim()) +
                            " dims");
  }
}

// Rounds in forward, passes the incoming gradient through unchanged in backward.
struct StraightThroughRound : torch::autograd::Function<StraightThroughRound> {
  static torch::Tensor forward(torch::autograd::AutogradContext* /*ctx*/, const torch::Tensor& x,
                               double step) {
    const auto scaled = x / step;
    return torch::sign(scaled) * torch::floor(torch::abs(scaled) + 0.5) * step;
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* /*ctx*/,
                                                 torch::autograd::variable_list grad_out) {
    return {grad_out[0], torch::Tensor()};
  }
};

}  // namespace

torch::Tensor downscale(const torch::Tensor& img, int64_t factor) {
  require_4d(img, "downscale input");
  if (factor <= 0) throw ConfigError("downscale factor must be positive");
  if (img.size(2) % factor != 0 || img.size(3) % factor != 0) {
    throw ConfigError("downscale factor " + std::to_string(factor) + " does not divide " +
                      std::to_string(img.size(2)) + "x" + std::to_string(img.size(3)));
  }
  if (factor == 1) return img;
  return F::avg_pool2d(img, F::AvgPool2dFuncOptions(factor).stride(factor));
}

torch::Tensor downscale_to(const torch::Tensor& img, int64_t lr_h, int64_t lr_w) {
  require_4d(img, "downscale input");
  if (lr_h <= 0 || lr_w <= 0 || img.size(2) % lr_h != 0 || img.size(3) % lr_w != 0 ||
      img.size(2) / lr_h != img.size(3) / lr_w) {
    throw ConfigError("cannot average-pool " + std::to_string(img.size(2)) + "x" +
                      std::to_string(img.size(3)) + " to " + std::to_string(lr_h) + "x" +
                      std::to_string(lr_w));
  }
  return downscale(img, img.size(2) / lr_h);
}

int64_t scale_factor(const torch::Tensor& hr, const torch::Tensor& lr) {
  require_4d(hr, "HR tensor");
  require_4d(lr, "LR tensor");
  const auto h = hr.size(2), w = hr.size(3), m = lr.size(2), n = lr.size(3);
  if (m == 0 || n == 0 || h % m != 0 || w % n != 0 || h / m != w / n) {
    throw ContractViolation("LR size " + std::to_string(m) + "x" + std::to_string(n) +
                            " is not an integral downscale of " + std::to_string(h) + "x" +
                            std::to_string(w));
  }
  return h / m;
}

torch::Tensor quantize_to_color_grid(const torch::Tensor& img, double step) {
  if (!(step > 0.0)) throw ConfigError("colour step must be positive");
  return StraightThroughRound::apply(img, step);
}

torch::Tensor lr_difference(const torch::Tensor& generated, const torch::Tensor& target,
                            double step) {
  const auto factor = scale_factor(generated, target);
  if (generated.size(0) != target.size(0) || generated.size(1) != target.size(1)) {
    throw ContractViolation("lr_difference: batch/channel mismatch between generated and target");
  }
  const auto quantized = quantize_to_color_grid(downscale(generated, factor), step);
  return torch::abs(target - quantized) / step;
}

double subspace_distance(const torch::Tensor& a, const torch::Tensor& b, double p) {
  if (!a.sizes().equals(b.sizes())) {
    throw ContractViolation("subspace_distance requires equal shapes");
  }
  if (!(p > 0.0)) throw ConfigError("norm order must be positive");
  torch::NoGradGuard no_grad;
  const auto diff = (a - b).to(torch::kDouble).abs();
  if (p == 1.0) return diff.sum().item<double>();
  return diff.pow(p).sum().pow(1.0 / p).item<double>();
}

bool in_subspace(const torch::Tensor& candidate, const torch::Tensor& target, double epsilon,
                 double p) {
  return subspace_distance(candidate, target, p) <= epsilon;
}

torch::Tensor upsample_bilinear(const torch::Tensor& lr, int64_t target_h, int64_t target_w) {
  require_4d(lr, "upsample input");
  if (target_h < lr.size(2) || target_w < lr.size(3)) {
    throw ContractViolation("upsample_bilinear target must not be smaller than the input");
  }
  if (target_h == lr.size(2) && target_w == lr.size(3)) return lr;
  return F::interpolate(lr, F::InterpolateFuncOptions()
                                .size(std::vector<int64_t>{target_h, target_w})
                                .mode(torch::kBilinear)
                                .align_corners(false));
}

}  // namespace lrgan
