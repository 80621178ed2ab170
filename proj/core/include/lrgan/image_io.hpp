#pragma once

// 8-bit image codecs. Pixels map linearly from [0, 255] to [-1, 1] on load and
// back (with clamping and rounding) on save. Tensors are [3, H, W], RGB order.

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace lrgan {

/// Decodes PNG/JPEG bytes. Throws std::runtime_error when undecodable.
torch::Tensor decode_image(const std::string& bytes);
torch::Tensor load_image(const std::string& path);

/// Encodes a [3, H, W] (or [1, 3, H, W]) tensor as PNG bytes.
std::string encode_png(const torch::Tensor& img);
void save_png(const std::string& path, const torch::Tensor& img);

/// Centre-crops to a square and resizes (area interpolation) to size x size.
torch::Tensor center_crop_resize(const torch::Tensor& img, int64_t size);

/// Quantizes to the 8-bit grid exactly as a PNG round trip would.
torch::Tensor quantize_8bit(const torch::Tensor& img);

/// Nearest-neighbour enlargement, for showing LR images next to HR tiles.
torch::Tensor enlarge_nearest(const torch::Tensor& img, int64_t size);

/// Tiles [3, h, w] images row-major into a grid with `cols` columns; empty
/// slots (undefined tensors) are filled with mid-gray.
torch::Tensor mosaic(const std::vector<torch::Tensor>& tiles, int64_t cols, int64_t tile_size);

}  // namespace lrgan
