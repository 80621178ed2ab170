#include "lrgan/data.hpp"

#include "lrgan/error.hpp"
#include "lrgan/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>

namespace lrgan {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(std::floor(hh));
  const double f = hh - sector;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (sector % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  rgb[0] = r;
  rgb[1] = g;
  rgb[2] = b;
}

}  // namespace

torch::Tensor Dataset::stack(const std::vector<size_t>& indices) const {
  std::vector<torch::Tensor> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(items.at(i));
  return torch::stack(picked);
}

Dataset Dataset::slice(size_t begin, size_t end, const std::string& split_name) const {
  Dataset out;
  out.resolution = resolution;
  out.split = split_name;
  out.items.assign(items.begin() + static_cast<std::ptrdiff_t>(begin),
                   items.begin() + static_cast<std::ptrdiff_t>(end));
  out.names.assign(names.begin() + static_cast<std::ptrdiff_t>(begin),
                   names.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Dataset split_dataset(const Dataset& full, Split split) {
  if (split == Split::kAll) return full;
  const auto n = full.size();
  auto val_count = n / 10;
  if (val_count == 0 && n >= 2) val_count = 1;
  const auto cut = n - val_count;
  return split == Split::kTrain ? full.slice(0, cut, "train") : full.slice(cut, n, "val");
}

Dataset load_dataset(const std::string& root, int64_t hr_size, Split split,
                     const std::string& domain) {
  fs::path base(root);
  if (!domain.empty()) base /= domain;
  if (!fs::is_directory(base)) throw DatasetError("dataset directory '" + base.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(base)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
    return fs::relative(a, base).generic_string() < fs::relative(b, base).generic_string();
  });
  Dataset full;
  full.resolution = hr_size;
  for (const auto& f : files) {
    try {
      full.items.push_back(center_crop_resize(load_image(f.string()), hr_size));
      full.names.push_back(fs::relative(f, base).generic_string());
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << f.string() << ": " << e.what() << "\n";
    }
  }
  if (full.items.empty()) throw DatasetError("no readable images under '" + base.string() + "'");
  return split_dataset(full, split);
}

std::pair<size_t, size_t> sample_pair_indices(size_t n, Rng& rng) {
  if (n < 2) throw DatasetError("pair sampling needs at least two items");
  std::uniform_int_distribution<size_t> first(0, n - 1);
  std::uniform_int_distribution<size_t> second(0, n - 2);
  const auto i = first(rng);
  auto j = second(rng);
  if (j >= i) ++j;
  return {i, j};
}

PairBatch sample_pair(const Dataset& dataset, Rng& rng) { return sample_batch(dataset, 1, rng); }

PairBatch sample_batch(const Dataset& dataset, int64_t batch_size, Rng& rng) {
  PairBatch out;
  std::vector<size_t> xs, ys;
  for (int64_t b = 0; b < batch_size; ++b) {
    const auto [i, j] = sample_pair_indices(dataset.size(), rng);
    out.indices.emplace_back(i, j);
    xs.push_back(i);
    ys.push_back(j);
  }
  out.x = dataset.stack(xs);
  out.y = dataset.stack(ys);
  return out;
}

SyntheticParams SyntheticParams::random(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  SyntheticParams p;
  p.center_x = in(0.4, 0.6);
  p.center_y = in(0.4, 0.6);
  p.semi_major = in(0.34, 0.44);
  p.semi_minor = in(0.09, 0.14);
  p.angle = in(0.0, std::numbers::pi);
  p.hue = in(0.0, 1.0);
  p.stripe_frequency = in(1.5, 3.0);
  p.stripe_phase = in(0.0, 2.0 * std::numbers::pi);
  p.background_angle = in(0.0, 2.0 * std::numbers::pi);
  for (int c = 0; c < 3; ++c) {
    p.bg_a[c] = in(-0.4, 0.4);
    p.bg_b[c] = in(-0.4, 0.4);
  }
  return p;
}

torch::Tensor render_synthetic(const SyntheticParams& p, int64_t size) {
  constexpr int kSuper = 4;
  double fg[3];
  hsv_to_rgb(p.hue, 0.85, 0.95, fg);
  const double ca = std::cos(p.angle), sa = std::sin(p.angle);
  const double ba = std::cos(p.background_angle), bb = std::sin(p.background_angle);
  auto out = torch::empty({3, size, size}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  const double inv = 1.0 / static_cast<double>(size);
  for (int64_t row = 0; row < size; ++row) {
    for (int64_t col = 0; col < size; ++col) {
      double pixel[3] = {0.0, 0.0, 0.0};
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double x = (col + (sx + 0.5) / kSuper) * inv;
          const double y = (row + (sy + 0.5) / kSuper) * inv;
          const double t = std::clamp(0.5 + (x - 0.5) * ba + (y - 0.5) * bb, 0.0, 1.0);
          const double dx = x - p.center_x, dy = y - p.center_y;
          const double along = dx * ca + dy * sa;
          const double across = -dx * sa + dy * ca;
          const double r2 = (along * along) / (p.semi_major * p.semi_major) +
                            (across * across) / (p.semi_minor * p.semi_minor);
          for (int c = 0; c < 3; ++c) {
            double v;
            if (r2 <= 1.0) {
              const double stripe =
                  0.2 * std::sin(2.0 * std::numbers::pi * p.stripe_frequency * along / p.semi_major +
                                 p.stripe_phase);
              v = (2.0 * fg[c] - 1.0) + stripe;
            } else {
              v = p.bg_a[c] * (1.0 - t) + p.bg_b[c] * t;
            }
            pixel[c] += v;
          }
        }
      }
      for (int c = 0; c < 3; ++c) {
        acc[c][row][col] =
            static_cast<float>(std::clamp(pixel[c] / (kSuper * kSuper), -1.0, 1.0));
      }
    }
  }
  return out;
}

Dataset make_synthetic_dataset(int64_t n, int64_t hr_size, uint64_t seed) {
  if (n < 2) throw DatasetError("synthetic dataset needs at least two items");
  Rng rng(seed);
  Dataset ds;
  ds.resolution = hr_size;
  ds.items.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    ds.items.push_back(render_synthetic(SyntheticParams::random(rng), hr_size));
    ds.names.push_back("synthetic_" + std::to_string(i));
  }
  return ds;
}

}  // namespace lrgan
