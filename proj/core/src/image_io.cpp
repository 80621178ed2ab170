#include "lrgan/image_io.hpp"

#include "lrgan/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <fstream>
#include <stdexcept>

namespace lrgan {

namespace {

torch::Tensor from_mat(const cv::Mat& decoded) {
  cv::Mat rgb;
  if (decoded.channels() == 1) {
    cv::cvtColor(decoded, rgb, cv::COLOR_GRAY2RGB);
  } else if (decoded.channels() == 4) {
    cv::cvtColor(decoded, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB);
  }
  if (rgb.depth() != CV_8U) rgb.convertTo(rgb, CV_8U, 1.0 / 256.0);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

cv::Mat to_mat(const torch::Tensor& img) {
  auto t = img.detach().to(torch::kCPU);
  if (t.dim() == 4) {
    if (t.size(0) != 1) throw ContractViolation("encode_png expects a single image");
    t = t[0];
  }
  if (t.dim() != 3 || t.size(0) != 3) throw ContractViolation("encode_png expects [3, H, W]");
  auto bytes = t.to(torch::kFloat32)
                   .add(1.0)
                   .mul(127.5)
                   .round()
                   .clamp(0.0, 255.0)
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  cv::Mat rgb(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3,
              bytes.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace

torch::Tensor decode_image(const std::string& bytes) {
  if (bytes.empty()) throw std::runtime_error("empty image payload");
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1,
                    const_cast<char*>(bytes.data()));
  const cv::Mat decoded = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  if (decoded.empty()) throw std::runtime_error("undecodable image payload");
  return from_mat(decoded);
}

torch::Tensor load_image(const std::string& path) {
  const cv::Mat decoded = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (decoded.empty()) throw std::runtime_error("cannot decode image '" + path + "'");
  return from_mat(decoded);
}

std::string encode_png(const torch::Tensor& img) {
  std::vector<uchar> buf;
  // Fixed compression parameters keep the byte stream reproducible.
  if (!cv::imencode(".png", to_mat(img), buf, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw std::runtime_error("PNG encoding failed");
  }
  return {buf.begin(), buf.end()};
}

void save_png(const std::string& path, const torch::Tensor& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

torch::Tensor center_crop_resize(const torch::Tensor& img, int64_t size) {
  const auto h = img.size(1), w = img.size(2);
  const auto side = std::min(h, w);
  auto cropped = img.narrow(1, (h - side) / 2, side).narrow(2, (w - side) / 2, side);
  if (side == size) return cropped.contiguous();
  auto hwc = cropped.permute({1, 2, 0}).contiguous().to(torch::kFloat32);
  cv::Mat src(static_cast<int>(side), static_cast<int>(side), CV_32FC3, hwc.data_ptr<float>());
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0,
             size < side ? cv::INTER_AREA : cv::INTER_CUBIC);
  auto out = torch::from_blob(dst.data, {size, size, 3}, torch::kFloat32).clone();
  return out.permute({2, 0, 1}).clamp(-1.0, 1.0).contiguous();
}

torch::Tensor quantize_8bit(const torch::Tensor& img) {
  return img.add(1.0).mul(127.5).round().clamp(0.0, 255.0).div(127.5).sub(1.0);
}

torch::Tensor enlarge_nearest(const torch::Tensor& img, int64_t size) {
  auto batched = img.dim() == 3 ? img.unsqueeze(0) : img;
  namespace F = torch::nn::functional;
  auto out = F::interpolate(batched, F::InterpolateFuncOptions()
                                         .size(std::vector<int64_t>{size, size})
                                         .mode(torch::kNearest));
  return img.dim() == 3 ? out[0] : out;
}

torch::Tensor mosaic(const std::vector<torch::Tensor>& tiles, int64_t cols, int64_t tile_size) {
  if (cols <= 0) throw ContractViolation("mosaic needs at least one column");
  const auto n = static_cast<int64_t>(tiles.size());
  const auto rows = (n + cols - 1) / cols;
  auto canvas = torch::zeros({3, rows * tile_size, cols * tile_size});
  for (int64_t i = 0; i < n; ++i) {
    if (!tiles[static_cast<size_t>(i)].defined()) continue;
    auto tile = tiles[static_cast<size_t>(i)].detach().to(torch::kCPU, torch::kFloat32);
    if (tile.dim() == 4) tile = tile[0];
    if (tile.size(1) != tile_size) tile = enlarge_nearest(tile, tile_size);
    canvas.narrow(1, (i / cols) * tile_size, tile_size)
        .narrow(2, (i % cols) * tile_size, tile_size)
        .copy_(tile);
  }
  return canvas;
}

}  // namespace lrgan
