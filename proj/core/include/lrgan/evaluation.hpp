#pragma once

// Metrics and the evaluation protocol: FID over pluggable features, an
// LPIPS-style perceptual distance, downscale consistency, LR perturbations for
// the robustness ablations, and translation grids.

#include "lrgan/data.hpp"

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lrgan {

/// G(source, lr_target) for evaluation; must not track gradients.
using Translator = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

/// Deterministic image embedding used by FID and LPIPS.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  /// True for the built-in weight-free extractor.
  virtual bool is_fallback() const { return false; }
  /// [N, 3, H, W] -> [N, D].
  virtual torch::Tensor embed(const torch::Tensor& images) = 0;
  /// Per-layer feature maps [N, C_l, H_l, W_l] for the perceptual distance.
  virtual std::vector<torch::Tensor> layers(const torch::Tensor& images) = 0;
};

/// Weight-free fallback: average-pooled image pyramid (8x8, 4x4, 2x2, 1x1 cells).
class PyramidExtractor final : public FeatureExtractor {
 public:
  std::string name() const override { return "pyramid-fallback"; }
  bool is_fallback() const override { return true; }
  torch::Tensor embed(const torch::Tensor& images) override;
  std::vector<torch::Tensor> layers(const torch::Tensor& images) override;
};

/// Loads a TorchScript module whose forward returns a tensor or a tuple/list of
/// feature maps. `embed` flattens the last output; `layers` returns all of them.
std::unique_ptr<FeatureExtractor> load_torchscript_extractor(const std::string& path);

/// Plugin when `path` is non-empty and loadable, otherwise the pyramid fallback
/// (a warning is printed when a given path fails to load).
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& path);

/// Frechet distance between Gaussians fitted to two feature sets ([N, D] each).
/// Requires N >= 2 per set and equal D. Covariances with N <= D get 1e-6 I.
double fid(const torch::Tensor& features_a, const torch::Tensor& features_b);

/// Per-sample perceptual distance ([N]). With a plugin extractor: sum over
/// layers of the spatial mean of squared differences between channel-unit-
/// normalized features. With the fallback: mean over pyramid levels of the
/// mean squared pixel difference.
torch::Tensor lpips_per_sample(const torch::Tensor& a, const torch::Tensor& b,
                               FeatureExtractor& extractor);
double lpips(const torch::Tensor& a, const torch::Tensor& b, FeatureExtractor& extractor);

struct EvalPair {
  size_t source = 0;
  size_t target = 0;
};

/// `count` (source, target) index pairs with distinct members, deterministic in seed.
std::vector<EvalPair> make_eval_pairs(size_t dataset_size, size_t count, uint64_t seed);

/// Per-pair mean |DS(G(X_s | DS(X_t))) - DS(X_t)|, averaged over pairs.
double downscale_consistency(const Translator& model, const Dataset& dataset,
                             const std::vector<EvalPair>& pairs, int64_t lr_size,
                             int64_t batch_size = 16);

// --- LR perturbations -------------------------------------------------------

struct PixelEdit {
  int64_t row = 0;
  int64_t col = 0;
  std::array<double, 3> rgb{};
};

struct LrPerturbation {
  enum class Mode { kNone, kGrayscale, kGaussian, kManualEdit };
  Mode mode = Mode::kNone;
  double sigma = 0.0;
  uint64_t seed = 0;
  std::vector<PixelEdit> edits;

  /// "none", "grayscale", "gaussian:<sigma>", "manual:r,c,R,G,B;r,c,R,G,B".
  static LrPerturbation parse(const std::string& text);
  std::string describe() const;
};

/// Grayscale: Rec.601 luminance broadcast to all channels. Gaussian: additive
/// N(0, sigma^2) noise, clamped to [-1, 1]. Manual: per-pixel assignments
/// (every batch item); out-of-range values are clamped with a warning.
torch::Tensor perturb_lr(const torch::Tensor& lr, const LrPerturbation& perturbation);

// --- Protocol ---------------------------------------------------------------

struct EvalOptions {
  int64_t lr_size = 8;
  int64_t samples_per_lr = 10;
  /// 0 evaluates every item of the set as an LR target.
  int64_t max_targets = 0;
  uint64_t seed = 0;
  LrPerturbation perturbation;
};

struct SampleManifestEntry {
  std::string target;
  std::vector<std::string> sources;
  bool operator==(const SampleManifestEntry&) const = default;
};

struct EvalReport {
  double fid = 0.0;
  double lpips_mean = 0.0;
  double consistency_mean = 0.0;
  int64_t generated_count = 0;
  int64_t target_count = 0;
  int64_t samples_per_lr = 0;
  std::string extractor;
  bool extractor_fallback = true;
  std::string perturbation = "none";
  std::string config_yaml;
  std::vector<SampleManifestEntry> manifest;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  bool operator==(const EvalReport&) const = default;
};

/// Published full-scale numbers for context (CelebA-HQ / AFHQ); not
/// reproducible at desk scale. Embedded in every serialized report.
std::string published_reference_json();

/// For every LR target in `dataset`, translates `samples_per_lr` distinct HR
/// sources from the same set, then reports FID(generated, real set), the mean
/// pairwise perceptual distance among each target's samples, and consistency.
/// `generated_out`, when given, receives the generated images in manifest order.
EvalReport eval_protocol(const Translator& model, const Dataset& dataset,
                         const EvalOptions& options, FeatureExtractor& extractor,
                         std::vector<torch::Tensor>* generated_out = nullptr);

/// One row of an LR-resolution sweep.
struct ResolutionRow {
  int64_t lr_size = 0;
  double fid = 0.0;
  double lpips = 0.0;
  double consistency = 0.0;
  int64_t train_steps = 0;
};
std::string resolution_table_json(const std::vector<ResolutionRow>& rows);

// --- Grids ------------------------------------------------------------------

struct TranslationGrid {
  /// [3, (T+1) * H, (S+1) * W]: sources along the top row, enlarged LR targets
  /// down the first column, G(source | target) in the body.
  torch::Tensor image;
  /// Generated tiles, row-major (target-major).
  std::vector<torch::Tensor> tiles;
};

TranslationGrid translation_grid(const Translator& model, const torch::Tensor& sources,
                                 const torch::Tensor& lr_targets);

}  // namespace lrgan
