#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lrgan {

using Rng = std::mt19937_64;

enum class Split { kAll, kTrain, kVal };

/// Preprocessed images held in memory, each [3, resolution, resolution] in [-1, 1].
struct Dataset {
  std::vector<torch::Tensor> items;
  std::vector<std::string> names;
  int64_t resolution = 0;
  std::string split = "all";

  size_t size() const { return items.size(); }
  /// Stacks the selected items into an [N, 3, R, R] batch.
  torch::Tensor stack(const std::vector<size_t>& indices) const;
  /// Items [begin, end) as a new dataset sharing tensors.
  Dataset slice(size_t begin, size_t end, const std::string& split_name) const;
};

/// Recursively loads PNG/JPEG files under `root` (sorted by relative path),
/// centre-crops and resizes them to hr_size. A non-empty `domain` restricts
/// loading to the subdirectory of that name. Unreadable files are skipped with
/// a warning. The validation split is the last 10% by sorted path.
/// Throws DatasetError when nothing loads.
Dataset load_dataset(const std::string& root, int64_t hr_size, Split split = Split::kAll,
                     const std::string& domain = "");

/// Train/val split of an already loaded dataset (last 10% is val).
Dataset split_dataset(const Dataset& full, Split split);

/// Two distinct indices drawn uniformly from [0, n). Throws DatasetError for n < 2.
std::pair<size_t, size_t> sample_pair_indices(size_t n, Rng& rng);

struct PairBatch {
  torch::Tensor x;
  torch::Tensor y;
  std::vector<std::pair<size_t, size_t>> indices;
};

/// A single (X, Y) pair, each [1, 3, R, R].
PairBatch sample_pair(const Dataset& dataset, Rng& rng);
/// `batch_size` independent pairs stacked into [B, 3, R, R] tensors.
PairBatch sample_batch(const Dataset& dataset, int64_t batch_size, Rng& rng);

/// Parameters of one procedurally rendered image: a striped, anti-aliased
/// ellipse over a linear two-colour background gradient.
struct SyntheticParams {
  double center_x = 0.5, center_y = 0.5;
  double semi_major = 0.38, semi_minor = 0.12;
  double angle = 0.0;  // radians
  double hue = 0.0;    // [0, 1)
  double stripe_frequency = 2.0, stripe_phase = 0.0;
  double background_angle = 0.0;
  double bg_a[3] = {-0.4, -0.4, -0.4};
  double bg_b[3] = {0.4, 0.4, 0.4};

  static SyntheticParams random(Rng& rng);
};

/// Renders [3, size, size] with 4x4 supersampling; values in [-1, 1].
torch::Tensor render_synthetic(const SyntheticParams& params, int64_t size);

/// n images with parameters drawn from continuous ranges; deterministic in seed.
Dataset make_synthetic_dataset(int64_t n, int64_t hr_size, uint64_t seed);

}  // namespace lrgan
