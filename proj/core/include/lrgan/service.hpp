#pragma once

// JSON handlers for the local generation service and the HTTP server that
// exposes them. Handlers are plain functions of the request body so they can
// be exercised without sockets.

#include "lrgan/config.hpp"
#include "lrgan/networks.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <string>

namespace lrgan {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

class InferenceService {
 public:
  /// No model: generate answers 503, downscale still works.
  InferenceService() = default;
  /// Loads the generator from a checkpoint file and freezes it in eval mode.
  static InferenceService from_checkpoint(const std::string& path);
  /// Wraps an in-memory generator (used by tests); `checkpoint_hash` may be empty.
  InferenceService(Generator generator, TrainConfig config, std::string checkpoint_hash = "",
                   int64_t step = 0);

  bool loaded() const { return static_cast<bool>(generator_); }
  const TrainConfig& config() const { return config_; }

  /// Body: {"source": base64 PNG, "lr_target": base64 PNG | [m*n*3 floats, HWC],
  ///        "seed"?: int}.
  ServiceResponse handle_generate(const std::string& body) const;
  /// Body: {"source": base64 PNG, "factor"?: int}. Without a factor the loaded
  /// model's LR size decides it.
  ServiceResponse handle_downscale(const std::string& body) const;
  ServiceResponse handle_info() const;

 private:
  // Forward passes need a non-const module; the parameters are never modified.
  mutable Generator generator_{nullptr};
  TrainConfig config_;
  std::string checkpoint_hash_;
  std::string config_hash_;
  int64_t step_ = 0;
};

/// Flattens [3, m, n] (or [1, 3, m, n]) to HWC row-major: index ((i*n)+j)*3+c.
std::vector<float> to_flat_hwc(const torch::Tensor& lr);
/// Inverse of to_flat_hwc, returning [3, m, n].
torch::Tensor from_flat_hwc(const std::vector<float>& values, int64_t m, int64_t n);

class HttpServer {
 public:
  /// `static_dir` (optional) is served at "/".
  HttpServer(const InferenceService& service, std::string static_dir = "");
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the socket; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind.
  void listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lrgan
