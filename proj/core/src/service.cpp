#include "lrgan/service.hpp"

#include "lrgan/checkpoint.hpp"
#include "lrgan/encoding.hpp"
#include "lrgan/error.hpp"
#include "lrgan/image_io.hpp"
#include "lrgan/imaging.hpp"

#include <httplib.h>

#include <chrono>
#include <filesystem>

namespace lrgan {

using nlohmann::json;

namespace {

// A request problem carrying its HTTP status and the offending field.
struct RequestError {
  int status;
  std::string field;
  std::string message;
};

ServiceResponse error_response(const RequestError& e) {
  return {e.status, {{"error", e.message}, {"field", e.field}}};
}

json parse_body(const std::string& body) {
  try {
    auto j = json::parse(body);
    if (!j.is_object()) throw RequestError{400, "body", "request body must be a JSON object"};
    return j;
  } catch (const json::parse_error& e) {
    throw RequestError{400, "body", std::string("malformed JSON: ") + e.what()};
  }
}

torch::Tensor decode_field_image(const json& req, const std::string& field) {
  if (!req.contains(field)) throw RequestError{400, field, "missing field '" + field + "'"};
  if (!req[field].is_string()) throw RequestError{400, field, "'" + field + "' must be a base64 PNG string"};
  try {
    return decode_image(base64_decode(req[field].get<std::string>()));
  } catch (const std::exception& e) {
    throw RequestError{400, field, "'" + field + "' is not a decodable image: " + e.what()};
  }
}

torch::Tensor decode_lr_target(const json& req, int64_t lr_size) {
  const std::string field = "lr_target";
  if (!req.contains(field)) throw RequestError{400, field, "missing field 'lr_target'"};
  const auto& v = req[field];
  torch::Tensor lr;
  if (v.is_string()) {
    lr = decode_field_image(req, field);
  } else if (v.is_array()) {
    std::vector<float> values;
    values.reserve(v.size());
    for (const auto& e : v) {
      if (!e.is_number()) throw RequestError{400, field, "'lr_target' must contain only numbers"};
      values.push_back(e.get<float>());
    }
    const auto expected = static_cast<size_t>(lr_size * lr_size * 3);
    if (values.size() != expected) {
      throw RequestError{422, field,
                         "'lr_target' has " + std::to_string(values.size()) + " values, expected " +
                             std::to_string(expected) + " (" + std::to_string(lr_size) + "x" +
                             std::to_string(lr_size) + "x3)"};
    }
    lr = from_flat_hwc(values, lr_size, lr_size);
  } else {
    throw RequestError{400, field, "'lr_target' must be a base64 PNG or a flat number array"};
  }
  if (lr.size(1) != lr_size || lr.size(2) != lr_size) {
    throw RequestError{422, field,
                       "'lr_target' is " + std::to_string(lr.size(1)) + "x" + std::to_string(lr.size(2)) +
                           ", the model expects " + std::to_string(lr_size) + "x" + std::to_string(lr_size)};
  }
  return lr.clamp(-1.0, 1.0);
}

}  // namespace

std::vector<float> to_flat_hwc(const torch::Tensor& lr) {
  auto t = lr.dim() == 4 ? lr.squeeze(0) : lr;
  t = t.permute({1, 2, 0}).contiguous().to(torch::kFloat32);
  const auto* p = t.data_ptr<float>();
  return {p, p + t.numel()};
}

torch::Tensor from_flat_hwc(const std::vector<float>& values, int64_t m, int64_t n) {
  if (static_cast<int64_t>(values.size()) != m * n * 3) {
    throw std::invalid_argument("flat LR array has the wrong length");
  }
  return torch::tensor(values).reshape({m, n, 3}).permute({2, 0, 1}).contiguous();
}

InferenceService InferenceService::from_checkpoint(const std::string& path) {
  auto state = load_checkpoint(path);
  return InferenceService(state.generator, state.config, sha256_file_hex(path), state.step);
}

InferenceService::InferenceService(Generator generator, TrainConfig config, std::string checkpoint_hash,
                                   int64_t step)
    : generator_(std::move(generator)),
      config_(std::move(config)),
      checkpoint_hash_(std::move(checkpoint_hash)),
      config_hash_(config_.hash()),
      step_(step) {
  generator_->eval();
  for (auto& p : generator_->parameters()) p.set_requires_grad(false);
}

ServiceResponse InferenceService::handle_generate(const std::string& body) const {
  if (!loaded()) return {503, {{"error", "no model loaded"}, {"field", ""}}};
  try {
    const auto start = std::chrono::steady_clock::now();
    const auto req = parse_body(body);
    auto source = decode_field_image(req, "source");
    const auto hr = config_.hr_size;
    if (source.size(1) != hr || source.size(2) != hr) source = center_crop_resize(source, hr);
    const auto lr = decode_lr_target(req, config_.lr_size);
    std::optional<int64_t> seed;
    if (req.contains("seed")) {
      if (!req["seed"].is_number_integer()) throw RequestError{400, "seed", "'seed' must be an integer"};
      seed = req["seed"].get<int64_t>();
    }

    torch::Tensor out;
    {
      // The model is frozen in eval mode; forward passes do not touch its state.
      torch::NoGradGuard no_grad;
      out = generator_->forward(source.unsqueeze(0), lr.unsqueeze(0));
    }
    const auto lr_batch = lr.unsqueeze(0);
    const double consistency = (downscale_to(out, config_.lr_size, config_.lr_size) - lr_batch)
                                   .abs()
                                   .flatten(1)
                                   .mean(1)
                                   .to(torch::kDouble)
                                   .sum()
                                   .item<double>();
    const auto png = encode_png(out);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    json res = {{"image", base64_encode(png)},
                {"consistency", consistency},
                {"latency_ms", ms},
                {"width", hr},
                {"height", hr}};
    if (seed) res["seed"] = *seed;
    return {200, res};
  } catch (const RequestError& e) {
    return error_response(e);
  }
}

ServiceResponse InferenceService::handle_downscale(const std::string& body) const {
  try {
    const auto req = parse_body(body);
    const auto source = decode_field_image(req, "source");
    const auto h = source.size(1);
    int64_t factor = 0;
    if (req.contains("factor")) {
      if (!req["factor"].is_number_integer() || req["factor"].get<int64_t>() < 1) {
        throw RequestError{400, "factor", "'factor' must be a positive integer"};
      }
      factor = req["factor"].get<int64_t>();
    } else if (loaded()) {
      if (h % config_.lr_size != 0) {
        throw RequestError{422, "source", "image size is not a multiple of the model's LR size"};
      }
      factor = h / config_.lr_size;
    } else {
      throw RequestError{400, "factor", "missing field 'factor' (no model loaded to infer it)"};
    }
    torch::Tensor lr;
    try {
      lr = downscale(source.unsqueeze(0), factor);
    } catch (const ConfigError& e) {
      throw RequestError{422, "factor", e.what()};
    }
    return {200,
            {{"lr", to_flat_hwc(lr)}, {"height", lr.size(2)}, {"width", lr.size(3)}, {"factor", factor}}};
  } catch (const RequestError& e) {
    return error_response(e);
  }
}

ServiceResponse InferenceService::handle_info() const {
  if (!loaded()) return {200, {{"model_loaded", false}}};
  return {200,
          {{"model_loaded", true},
           {"hr_size", config_.hr_size},
           {"lr_size", config_.lr_size},
           {"checkpoint_hash", checkpoint_hash_},
           {"config_hash", config_hash_},
           {"step", step_}}};
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(const InferenceService& service, std::string static_dir)
    : impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;
  const auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  srv.Post("/api/generate", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_generate(req.body));
  });
  srv.Post("/api/downscale", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_downscale(req.body));
  });
  srv.Get("/api/info", [&service, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service.handle_info());
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", what}, {"field", ""}}.dump(), "application/json");
  });
  if (!static_dir.empty()) {
    if (!std::filesystem::is_directory(static_dir)) {
      throw ConfigError("static directory '" + static_dir + "' does not exist");
    }
    srv.set_mount_point("/", static_dir);
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace lrgan
