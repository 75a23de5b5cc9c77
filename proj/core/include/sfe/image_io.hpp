#pragma once

// Binary PPM (P6) / PGM (P5) reading and writing, and image grids.

#include <filesystem>
#include <vector>

#include <torch/types.h>

namespace sfe::image_io {

/// [3, H, W] in [-1, 1] -> P6.
void write_ppm(const std::filesystem::path& path, const torch::Tensor& image);
/// P6 -> [3, H, W] in [-1, 1].
torch::Tensor read_ppm(const std::filesystem::path& path);

/// P5 or P6 mask; a pixel is inside when its (mean) value is >= 128.
torch::Tensor read_mask(const std::filesystem::path& path);

/// Rows of [B, 3, R, R] stacks tiled into one image with a 2-pixel gutter.
torch::Tensor tile_grid(const std::vector<torch::Tensor>& rows);

}  // namespace sfe::image_io
