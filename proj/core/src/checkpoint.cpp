#include "lrgan/checkpoint.hpp"

#include "lrgan/encoding.hpp"
#include "lrgan/error.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace lrgan {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'R', 'G', 'A', 'N', 'C', 'K', 'P'};
constexpr size_t kDigestChars = 64;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

struct TensorWriter {
  json index = json::array();
  std::string blob;

  void add(const std::string& name, const torch::Tensor& t) {
    const auto c = t.detach().to(torch::kCPU).contiguous();
    const auto nbytes = static_cast<size_t>(c.numel()) * c.element_size();
    index.push_back({{"name", name},
                     {"dtype", std::string(c.dtype().name())},
                     {"shape", c.sizes().vec()},
                     {"offset", blob.size()},
                     {"nbytes", nbytes}});
    blob.append(static_cast<const char*>(c.data_ptr()), nbytes);
  }
};

torch::ScalarType dtype_from_name(const std::string& name) {
  if (name == "float") return torch::kFloat32;
  if (name == "double") return torch::kFloat64;
  if (name == "long" || name == "int64_t") return torch::kInt64;
  throw CheckpointError("unsupported tensor dtype '" + name + "' in checkpoint");
}

void collect_module(TensorWriter& w, const std::string& prefix, const torch::nn::Module& m) {
  for (const auto& p : m.named_parameters()) w.add(prefix + ".param." + p.key(), p.value());
  for (const auto& b : m.named_buffers()) w.add(prefix + ".buffer." + b.key(), b.value());
}

void collect_adam(TensorWriter& w, json& meta, const std::string& prefix, torch::optim::Adam& opt) {
  json steps = json::array();
  const auto& params = opt.param_groups().at(0).params();
  for (size_t i = 0; i < params.size(); ++i) {
    const auto it = opt.state().find(params[i].unsafeGetTensorImpl());
    if (it == opt.state().end()) {
      steps.push_back(nullptr);
      continue;
    }
    const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
    steps.push_back(st.step());
    w.add(prefix + "." + std::to_string(i) + ".exp_avg", st.exp_avg());
    w.add(prefix + "." + std::to_string(i) + ".exp_avg_sq", st.exp_avg_sq());
  }
  meta[prefix + "_steps"] = steps;
}

}  // namespace

std::string serialize_checkpoint(const TrainState& state) {
  TensorWriter w;
  json meta;
  meta["config"] = state.config.to_yaml();
  meta["config_hash"] = state.config.hash();
  meta["step"] = state.step;
  meta["d_updates"] = state.d_updates;
  meta["g_updates"] = state.g_updates;
  std::ostringstream rng;
  rng << state.rng;
  meta["rng"] = rng.str();
  collect_module(w, "generator", *state.generator);
  collect_module(w, "discriminator", *state.discriminator);
  collect_adam(w, meta, "opt_g", *state.opt_g);
  collect_adam(w, meta, "opt_d", *state.opt_d);
  meta["tensors"] = w.index;

  const auto header = meta.dump();
  std::string payload;
  put<uint64_t>(payload, header.size());
  payload += header;
  payload += w.blob;

  std::string out(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kCheckpointVersion);
  put<uint64_t>(out, payload.size());
  out += payload;
  out += sha256_hex(payload);
  return out;
}

TrainState deserialize_checkpoint(const std::string& bytes) {
  size_t pos = 0;
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  pos = sizeof(kMagic);
  const auto version = take<uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw CheckpointError("incompatible checkpoint version " + std::to_string(version) +
                          " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto payload_size = take<uint64_t>(bytes, pos);
  if (bytes.size() != pos + payload_size + kDigestChars) {
    throw CheckpointError("checkpoint size does not match its header (truncated or corrupted)");
  }
  const std::string payload = bytes.substr(pos, payload_size);
  if (sha256_hex(payload) != bytes.substr(pos + payload_size)) {
    throw CheckpointError("checkpoint checksum mismatch (corrupted file)");
  }

  size_t ppos = 0;
  const auto header_size = take<uint64_t>(payload, ppos);
  if (ppos + header_size > payload.size()) throw CheckpointError("checkpoint header truncated");
  json meta;
  try {
    meta = json::parse(payload.substr(ppos, header_size));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint header unreadable: ") + e.what());
  }
  const size_t blob_start = ppos + header_size;

  try {
    const auto config = parse_config_yaml(meta.at("config").get<std::string>());
    if (config.hash() != meta.at("config_hash").get<std::string>()) {
      throw CheckpointError("checkpoint config hash mismatch");
    }

    std::map<std::string, torch::Tensor> tensors;
    for (const auto& e : meta.at("tensors")) {
      const auto offset = e.at("offset").get<size_t>();
      const auto nbytes = e.at("nbytes").get<size_t>();
      if (blob_start + offset + nbytes > payload.size()) {
        throw CheckpointError("tensor '" + e.at("name").get<std::string>() + "' out of range");
      }
      auto t = torch::empty(e.at("shape").get<std::vector<int64_t>>(),
                            dtype_from_name(e.at("dtype").get<std::string>()));
      if (static_cast<size_t>(t.numel()) * t.element_size() != nbytes) {
        throw CheckpointError("tensor '" + e.at("name").get<std::string>() + "' size mismatch");
      }
      std::memcpy(t.data_ptr(), payload.data() + blob_start + offset, nbytes);
      tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }

    auto state = make_train_state(config);
    const auto fetch = [&](const std::string& name, const torch::Tensor& like) {
      const auto it = tensors.find(name);
      if (it == tensors.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
      if (!it->second.sizes().equals(like.sizes()) || it->second.dtype() != like.dtype()) {
        throw CheckpointError("tensor '" + name + "' has an unexpected shape or dtype");
      }
      return it->second;
    };
    const auto restore_module = [&](const std::string& prefix, torch::nn::Module& m) {
      torch::NoGradGuard no_grad;
      for (auto& p : m.named_parameters()) p.value().copy_(fetch(prefix + ".param." + p.key(), p.value()));
      for (auto& b : m.named_buffers()) b.value().copy_(fetch(prefix + ".buffer." + b.key(), b.value()));
    };
    const auto restore_adam = [&](const std::string& prefix, torch::optim::Adam& opt) {
      const auto& steps = meta.at(prefix + "_steps");
      const auto& params = opt.param_groups().at(0).params();
      if (steps.size() != params.size()) throw CheckpointError(prefix + " parameter count mismatch");
      for (size_t i = 0; i < params.size(); ++i) {
        if (steps[i].is_null()) continue;
        auto st = std::make_unique<torch::optim::AdamParamState>();
        st->step(steps[i].get<int64_t>());
        st->exp_avg(fetch(prefix + "." + std::to_string(i) + ".exp_avg", params[i]).clone());
        st->exp_avg_sq(fetch(prefix + "." + std::to_string(i) + ".exp_avg_sq", params[i]).clone());
        opt.state()[params[i].unsafeGetTensorImpl()] = std::move(st);
      }
    };
    restore_module("generator", *state.generator);
    restore_module("discriminator", *state.discriminator);
    restore_adam("opt_g", *state.opt_g);
    restore_adam("opt_d", *state.opt_d);
    state.step = meta.at("step").get<int64_t>();
    state.d_updates = meta.at("d_updates").get<int64_t>();
    state.g_updates = meta.at("g_updates").get<int64_t>();
    std::istringstream rng(meta.at("rng").get<std::string>());
    rng >> state.rng;
    if (rng.fail()) throw CheckpointError("checkpoint RNG state unreadable");
    return state;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
  }
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  const auto bytes = serialize_checkpoint(state);
  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace lrgan
