#include "lrgan/spectral_norm.hpp"

#include <cmath>

namespace lrgan {

namespace F = torch::nn::functional;

namespace {

constexpr double kNormEps = 1e-12;

torch::Tensor as_matrix(const torch::Tensor& weight) { return weight.reshape({weight.size(0), -1}); }

torch::Tensor unit(const torch::Tensor& x) {
  return F::normalize(x, F::NormalizeFuncOptions().dim(0).eps(kNormEps));
}

void power_iterate(const torch::Tensor& w2, torch::Tensor& u, torch::Tensor& v, int iterations) {
  for (int i = 0; i < iterations; ++i) {
    v = unit(torch::mv(w2.t(), u));
    u = unit(torch::mv(w2, v));
  }
}

}  // namespace

PowerIterationState make_power_iteration_state(const torch::Tensor& weight, int warmup) {
  torch::NoGradGuard no_grad;
  const auto w2 = as_matrix(weight.detach());
  auto u = unit(torch::randn({w2.size(0)}, w2.options()));
  auto v = unit(torch::mv(w2.t(), u));
  power_iterate(w2, u, v, warmup);
  return {u, v};
}

PowerIterationState exact_power_iteration_state(const torch::Tensor& weight) {
  torch::NoGradGuard no_grad;
  const auto w2 = as_matrix(weight.detach());
  const auto svd = torch::linalg_svd(w2.to(torch::kDouble), /*full_matrices=*/false);
  auto v = unit(std::get<2>(svd)[0].to(w2.scalar_type()));
  auto u = unit(torch::mv(w2, v));
  if (u.norm().item<double>() == 0.0) return make_power_iteration_state(weight, 0);
  return {u, v};
}

int refresh_power_iteration(const torch::Tensor& weight, PowerIterationState& state, int max_iterations,
                            double tolerance) {
  torch::NoGradGuard no_grad;
  const auto w2 = as_matrix(weight.detach());
  auto u = state.u.clone(), v = state.v.clone();
  // Stop on the singular-pair residual |W^T u - sigma v| / sigma; the error in
  // sigma is of the order of its square. Nearly tied top singular values can
  // stall the iteration, in which case the state is rebuilt from an SVD.
  for (int used = 1; used <= max_iterations; ++used) {
    power_iterate(w2, u, v, 1);
    const auto wu = torch::mv(w2.t(), u);
    const double sigma = wu.norm().item<double>();
    if (sigma == 0.0) return used;  // zero weight: keep the previous direction
    if ((wu / sigma - v).norm().item<double>() <= tolerance) {
      state.u.copy_(u);
      state.v.copy_(v);
      return used;
    }
  }
  const auto exact = exact_power_iteration_state(weight);
  state.u.copy_(exact.u);
  state.v.copy_(exact.v);
  return max_iterations;
}

torch::Tensor spectral_normalize(const torch::Tensor& weight, PowerIterationState& state,
                                 int iterations, bool update_state) {
  const auto w2 = as_matrix(weight);
  torch::Tensor u, v;
  {
    torch::NoGradGuard no_grad;
    u = state.u.clone();
    v = state.v.clone();
    const auto w2d = w2.detach();
    power_iterate(w2d, u, v, iterations);
    // A zero weight collapses both vectors; keep the previous direction.
    if (update_state && iterations > 0 && u.norm().item<double>() > 0.0 &&
        v.norm().item<double>() > 0.0) {
      state.u.copy_(u);
      state.v.copy_(v);
    }
  }
  const auto sigma = torch::dot(u, torch::mv(w2, v));
  return weight / sigma.clamp_min(kNormEps);
}

double largest_singular_value(const torch::Tensor& weight) {
  torch::NoGradGuard no_grad;
  const auto s = torch::linalg_svdvals(as_matrix(weight.detach()).to(torch::kDouble));
  return s.max().item<double>();
}

SNConv2dImpl::SNConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel_size,
                           int64_t padding, bool with_bias)
    : padding_(padding < 0 ? kernel_size / 2 : padding) {
  weight = register_parameter(
      "weight", torch::empty({out_channels, in_channels, kernel_size, kernel_size}));
  torch::nn::init::kaiming_uniform_(weight, std::sqrt(5.0));
  if (with_bias) bias = register_parameter("bias", torch::zeros({out_channels}));
  auto state = exact_power_iteration_state(weight);
  u = register_buffer("u", state.u);
  v = register_buffer("v", state.v);
}

torch::Tensor SNConv2dImpl::forward(const torch::Tensor& x) {
  PowerIterationState state{u, v};
  const bool train = is_training();
  const auto w = spectral_normalize(weight, state, train ? power_iterations : 0, train);
  return F::conv2d(x, w, F::Conv2dFuncOptions().bias(bias).padding(padding_));
}

torch::Tensor SNConv2dImpl::effective_weight() const {
  torch::NoGradGuard no_grad;
  PowerIterationState state{u.clone(), v.clone()};
  return spectral_normalize(weight.detach(), state, 0, false);
}

void SNConv2dImpl::refresh(int max_iterations, double tolerance) {
  PowerIterationState state{u, v};
  refresh_power_iteration(weight, state, max_iterations, tolerance);
}

SNLinearImpl::SNLinearImpl(int64_t in_features, int64_t out_features, bool with_bias) {
  weight = register_parameter("weight", torch::empty({out_features, in_features}));
  torch::nn::init::kaiming_uniform_(weight, std::sqrt(5.0));
  if (with_bias) bias = register_parameter("bias", torch::zeros({out_features}));
  auto state = exact_power_iteration_state(weight);
  u = register_buffer("u", state.u);
  v = register_buffer("v", state.v);
}

torch::Tensor SNLinearImpl::forward(const torch::Tensor& x) {
  PowerIterationState state{u, v};
  const bool train = is_training();
  const auto w = spectral_normalize(weight, state, train ? power_iterations : 0, train);
  return F::linear(x, w, bias);
}

torch::Tensor SNLinearImpl::effective_weight() const {
  torch::NoGradGuard no_grad;
  PowerIterationState state{u.clone(), v.clone()};
  return spectral_normalize(weight.detach(), state, 0, false);
}

void SNLinearImpl::refresh(int max_iterations, double tolerance) {
  PowerIterationState state{u, v};
  refresh_power_iteration(weight, state, max_iterations, tolerance);
}

void refresh_spectral_norms(torch::nn::Module& module) {
  for (const auto& m : module.modules(/*include_self=*/true)) {
    if (auto* conv = m->as<SNConv2dImpl>()) conv->refresh();
    if (auto* lin = m->as<SNLinearImpl>()) lin->refresh();
  }
}

}  // namespace lrgan
