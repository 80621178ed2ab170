#include "lrgan/config.hpp"

#include "lrgan/encoding.hpp"
#include "lrgan/error.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <variant>

namespace lrgan {

namespace {

using Member = std::variant<int64_t TrainConfig::*, uint64_t TrainConfig::*, double TrainConfig::*,
                            bool TrainConfig::*, std::string TrainConfig::*>;

struct Field {
  std::string key;
  Member member;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"hr_size", &TrainConfig::hr_size},
      {"lr_size", &TrainConfig::lr_size},
      {"model.base_channels", &TrainConfig::base_channels},
      {"model.max_channels", &TrainConfig::max_channels},
      {"model.num_scales", &TrainConfig::num_scales},
      {"model.blocks_per_scale", &TrainConfig::blocks_per_scale},
      {"model.bottleneck_blocks", &TrainConfig::bottleneck_blocks},
      {"model.d_base_channels", &TrainConfig::d_base_channels},
      {"model.d_max_channels", &TrainConfig::d_max_channels},
      {"batch_size", &TrainConfig::batch_size},
      {"lr_g", &TrainConfig::lr_g},
      {"lr_d", &TrainConfig::lr_d},
      {"adam.beta1", &TrainConfig::adam_beta1},
      {"adam.beta2", &TrainConfig::adam_beta2},
      {"lambda_cyc", &TrainConfig::lambda_cyc},
      {"rec_weight", &TrainConfig::rec_weight},
      {"generator_adv", &TrainConfig::generator_adv},
      {"cycle_form", &TrainConfig::cycle_form},
      {"r1_gamma", &TrainConfig::r1_gamma},
      {"r", &TrainConfig::color_step},
      {"epsilon", &TrainConfig::epsilon},
      {"norm_p", &TrainConfig::norm_p},
      {"max_steps", &TrainConfig::max_steps},
      {"seed", &TrainConfig::seed},
      {"checkpoint_interval", &TrainConfig::checkpoint_interval},
      {"log_interval", &TrainConfig::log_interval},
      {"sample_interval", &TrainConfig::sample_interval},
      {"data.root", &TrainConfig::data_root},
      {"data.domain", &TrainConfig::data_domain},
      {"data.synthetic_count", &TrainConfig::synthetic_count},
      {"data.synthetic_seed", &TrainConfig::synthetic_seed},
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars for double is not available everywhere; stod with a full-consumption check.
    size_t used = 0;
    try {
      value = std::stod(text, &used);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + text + "' is not a number");
    }
    if (used != text.size()) throw ConfigError("config key '" + key + "': trailing characters");
  } else {
    const auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc{} || res.ptr != last) {
      throw ConfigError("config key '" + key + "': '" + text + "' is not an integer");
    }
  }
  return value;
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return ss.str();
}

void flatten(const YAML::Node& node, const std::string& prefix,
             std::vector<std::pair<std::string, std::string>>& out) {
  if (node.IsMap()) {
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      flatten(kv.second, prefix.empty() ? key : prefix + "." + key, out);
    }
  } else if (node.IsScalar()) {
    out.emplace_back(prefix, node.as<std::string>());
  } else if (node.IsNull()) {
    out.emplace_back(prefix, "");
  } else {
    throw ConfigError("config key '" + prefix + "' must be a scalar");
  }
}

}  // namespace

TrainConfig TrainConfig::full_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.hr_size = 64;
  c.lr_size = 4;
  c.num_scales = 4;
  c.base_channels = 32;
  c.max_channels = 256;
  c.d_base_channels = 32;
  c.d_max_channels = 256;
  c.lambda_cyc = default_lambda_cyc(c.hr_size);
  c.max_steps = 20000;
  c.synthetic_count = 500;
  c.checkpoint_interval = 1000;
  c.log_interval = 50;
  c.sample_interval = 1000;
  return c;
}

double TrainConfig::default_lambda_cyc(int64_t hr_size) { return hr_size <= 128 ? 1.0 : 0.1; }

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> v;
    for (const auto& f : fields()) v.push_back(f.key);
    return v;
  }();
  return k;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  const auto& field = find_field(key);
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          this->*member = value;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "on" || value == "1" || value == "yes") {
            this->*member = true;
          } else if (value == "false" || value == "off" || value == "0" || value == "no") {
            this->*member = false;
          } else {
            throw ConfigError("config key '" + key + "': '" + value + "' is not a boolean");
          }
        } else {
          this->*member = parse_number<T>(key, value);
        }
      },
      field.member);
}

std::string TrainConfig::get(const std::string& key) const {
  const auto& field = find_field(key);
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cvref_t<decltype(this->*member)>;
        const auto& v = this->*member;
        if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_floating_point_v<T>) {
          return format_double(v);
        } else {
          return std::to_string(v);
        }
      },
      field.member);
}

void TrainConfig::apply_overrides(const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + kv + "' is not of the form key=value");
    }
    set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

void TrainConfig::validate() const {
  const auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("invalid config field '" + key + "': " + why);
  };
  if (batch_size < 2) fail("batch_size", "must be >= 2");
  if (!(lr_g > 0.0)) fail("lr_g", "must be positive");
  if (!(lr_d >= lr_g)) fail("lr_d", "must be >= lr_g (two time-scale update)");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0) fail("adam.beta1", "must be in [0, 1)");
  if (adam_beta2 < 0.0 || adam_beta2 >= 1.0) fail("adam.beta2", "must be in [0, 1)");
  if (lambda_cyc < 0.0) fail("lambda_cyc", "must be >= 0");
  if (rec_weight < 0.0) fail("rec_weight", "must be >= 0");
  if (r1_gamma < 0.0) fail("r1_gamma", "must be >= 0");
  if (!(color_step > 0.0)) fail("r", "must be positive");
  if (epsilon < 0.0) fail("epsilon", "must be >= 0");
  if (!(norm_p > 0.0)) fail("norm_p", "must be positive");
  if (cycle_form != "alg1" && cycle_form != "enumerated") {
    fail("cycle_form", "must be 'alg1' or 'enumerated'");
  }
  if (max_steps < 0) fail("max_steps", "must be >= 0");
  if (checkpoint_interval < 0) fail("checkpoint_interval", "must be >= 0");
  if (log_interval < 0) fail("log_interval", "must be >= 0");
  if (sample_interval < 0) fail("sample_interval", "must be >= 0");
  if (synthetic_count < 0) fail("data.synthetic_count", "must be >= 0");
  if (synthetic_count == 1) fail("data.synthetic_count", "must be >= 2 when set");
  try {
    generator_spec().validate();
  } catch (const ConfigError& e) {
    fail("model", e.what());
  }
  try {
    discriminator_spec().validate();
  } catch (const ConfigError& e) {
    fail("model.d_base_channels", e.what());
  }
}

std::string TrainConfig::to_yaml() const {
  std::string out;
  for (const auto& f : fields()) {
    auto value = get(f.key);
    // Quote strings so empty values and special characters survive YAML.
    if (std::holds_alternative<std::string TrainConfig::*>(f.member)) {
      YAML::Emitter e;
      e << YAML::DoubleQuoted << value;
      value = e.c_str();
    }
    out += f.key + ": " + value + "\n";
  }
  return out;
}

std::string TrainConfig::hash() const { return sha256_hex(to_yaml()); }

GeneratorSpec TrainConfig::generator_spec() const {
  GeneratorSpec s;
  s.hr_size = hr_size;
  s.lr_size = lr_size;
  s.base_channels = base_channels;
  s.max_channels = max_channels;
  s.num_scales = num_scales;
  s.blocks_per_scale = blocks_per_scale;
  s.bottleneck_blocks = bottleneck_blocks;
  return s;
}

DiscriminatorSpec TrainConfig::discriminator_spec() const {
  DiscriminatorSpec s;
  s.hr_size = hr_size;
  s.lr_size = lr_size;
  s.base_channels = d_base_channels;
  s.max_channels = d_max_channels;
  return s;
}

TrainConfig parse_config_yaml(const std::string& text, TrainConfig base) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (root.IsNull()) return base;
  if (!root.IsMap()) throw ConfigError("config must be a key/value mapping");
  std::vector<std::pair<std::string, std::string>> flat;
  flatten(root, "", flat);
  for (const auto& [k, v] : flat) base.set(k, v);
  return base;
}

TrainConfig load_config_file(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_yaml(ss.str(), std::move(base));
}

}  // namespace lrgan
