#pragma once

#include "lrgan/imaging.hpp"
#include "lrgan/networks.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lrgan {

/// Every knob of a training run. Serialized as a flat YAML document whose
/// keys are the dotted names listed by `TrainConfig::keys()`; nested YAML maps
/// are accepted and flattened to the same dotted names.
struct TrainConfig {
  // Architecture.
  int64_t hr_size = 128;
  int64_t lr_size = 8;
  int64_t base_channels = 64;
  int64_t max_channels = 512;
  int64_t num_scales = 4;
  int64_t blocks_per_scale = 1;
  int64_t bottleneck_blocks = 2;
  int64_t d_base_channels = 64;
  int64_t d_max_channels = 512;

  // Optimization (two time-scale Adam).
  int64_t batch_size = 8;
  double lr_g = 1e-3;
  double lr_d = 4e-3;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.99;

  // Objective.
  double lambda_cyc = 1.0;
  double rec_weight = 1.0;
  bool generator_adv = true;
  std::string cycle_form = "alg1";  // alg1 | enumerated
  double r1_gamma = 0.5;
  double color_step = kColorStep;
  double epsilon = 0.0;
  double norm_p = 1.0;

  // Schedule.
  int64_t max_steps = 100000;
  uint64_t seed = 0;
  int64_t checkpoint_interval = 1000;
  int64_t log_interval = 100;
  int64_t sample_interval = 1000;

  // Data. A positive synthetic_count selects the procedural dataset.
  std::string data_root;
  std::string data_domain;
  int64_t synthetic_count = 0;
  uint64_t synthetic_seed = 1;

  /// 128x128 / 8x8 defaults.
  static TrainConfig full_defaults();
  /// Desk-scale profile: 64x64 HR, 4x4 LR, synthetic data.
  static TrainConfig toy();
  /// lambda_cyc recommended for a given HR resolution (1 for <=128, 0.1 above).
  static double default_lambda_cyc(int64_t hr_size);

  /// Ordered list of dotted keys.
  static const std::vector<std::string>& keys();

  /// Sets one field from its textual value. Throws ConfigError naming the key.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Applies "key=value" overrides in order.
  void apply_overrides(const std::vector<std::string>& overrides);

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  /// Canonical YAML text (fixed key order, round-trip precision).
  std::string to_yaml() const;
  /// SHA-256 of `to_yaml()`, hex.
  std::string hash() const;

  GeneratorSpec generator_spec() const;
  DiscriminatorSpec discriminator_spec() const;

  bool operator==(const TrainConfig&) const = default;
};

TrainConfig parse_config_yaml(const std::string& text, TrainConfig base = TrainConfig{});
TrainConfig load_config_file(const std::string& path, TrainConfig base = TrainConfig{});

}  // namespace lrgan
