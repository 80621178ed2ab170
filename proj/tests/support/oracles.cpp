#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lrgan::oracle {

torch::Tensor block_mean(const torch::Tensor& img, int64_t factor) {
  const auto src = img.to(torch::kDouble).contiguous();
  const auto n = src.size(0), c = src.size(1), h = src.size(2) / factor, w = src.size(3) / factor;
  auto out = torch::zeros({n, c, h, w}, torch::kDouble);
  auto a = src.accessor<double, 4>();
  auto o = out.accessor<double, 4>();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
          double s = 0.0;
          for (int64_t di = 0; di < factor; ++di)
            for (int64_t dj = 0; dj < factor; ++dj) s += a[b][ch][i * factor + di][j * factor + dj];
          o[b][ch][i][j] = s / static_cast<double>(factor * factor);
        }
  return out;
}

double nearest_multiple(double v, double step) {
  const auto k0 = static_cast<long long>(v / step);
  double best = 0.0;
  double best_dist = INFINITY;
  for (long long k = k0 - 2; k <= k0 + 2; ++k) {
    const double cand = static_cast<double>(k) * step;
    const double dist = std::abs(v - cand);
    const bool tie = std::abs(dist - best_dist) < 1e-15;
    if (dist < best_dist - 1e-15 || (tie && std::abs(cand) > std::abs(best))) {
      best = cand;
      best_dist = dist;
    }
  }
  return best;
}

torch::Tensor lr_difference(const torch::Tensor& generated, const torch::Tensor& target, double step) {
  const auto factor = generated.size(2) / target.size(2);
  const auto ds = block_mean(generated, factor);
  const auto t = target.to(torch::kDouble).contiguous();
  auto out = torch::zeros_like(ds);
  auto d = ds.accessor<double, 4>();
  auto ta = t.accessor<double, 4>();
  auto o = out.accessor<double, 4>();
  for (int64_t b = 0; b < ds.size(0); ++b)
    for (int64_t c = 0; c < ds.size(1); ++c)
      for (int64_t i = 0; i < ds.size(2); ++i)
        for (int64_t j = 0; j < ds.size(3); ++j)
          o[b][c][i][j] = std::abs(ta[b][c][i][j] - nearest_multiple(d[b][c][i][j], step)) / step;
  return out;
}

double l1_sum(const torch::Tensor& a, const torch::Tensor& b) {
  const auto x = a.to(torch::kDouble).contiguous().flatten();
  const auto y = b.to(torch::kDouble).contiguous().flatten();
  const auto* p = x.data_ptr<double>();
  const auto* q = y.data_ptr<double>();
  double s = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) s += std::abs(p[i] - q[i]);
  return s;
}

double l1_mean(const torch::Tensor& a, const torch::Tensor& b) {
  return l1_sum(a, b) / static_cast<double>(a.numel());
}

double log_sigmoid(double z) {
  return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f,
                               const torch::Tensor& at, double h) {
  auto x = at.detach().to(torch::kDouble).clone().contiguous();
  auto grad = torch::zeros_like(x);
  auto* p = x.data_ptr<double>();
  auto* g = grad.data_ptr<double>();
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = f(x);
    p[i] = orig - h;
    const double down = f(x);
    p[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(const torch::Tensor& analytic, const torch::Tensor& numeric, double floor) {
  const auto a = analytic.to(torch::kDouble);
  const auto n = numeric.to(torch::kDouble);
  const double scale = std::max(n.abs().max().item<double>(), floor);
  return (a - n).abs().max().item<double>() / scale;
}

double top_singular_value(const torch::Tensor& weight) {
  const auto w = weight.detach().to(torch::kDouble).reshape({weight.size(0), -1});
  auto v = torch::ones({w.size(1)}, torch::kDouble) / std::sqrt(static_cast<double>(w.size(1)));
  double sigma = 0.0;
  for (int it = 0; it < 5000; ++it) {
    auto next = w.t().mv(w.mv(v));
    const double norm = next.norm().item<double>();
    if (norm == 0.0) return 0.0;
    next = next / norm;
    const double s = w.mv(next).norm().item<double>();
    const bool done = std::abs(s - sigma) < 1e-13 * std::max(1.0, s);
    sigma = s;
    v = next;
    if (done) break;
  }
  return sigma;
}

namespace {
std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}
}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double num = 0, da = 0, db = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace lrgan::oracle
