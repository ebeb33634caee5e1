#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ctiunet/tensor.hpp"

namespace ctiunet {

// 8-bit interleaved raster plus PNG tEXt annotations.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;
  std::map<std::string, std::string> text;
};

// Gray files decode to 1 channel, everything else to RGB. Alpha is dropped.
// Throws LoadError(kIo) on unreadable or malformed files.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

// (1, C, H, W) with values scaled to [0, 1].
Tensor4 image_to_tensor(const Image8& image);
// Clamps to [0, 1] and rounds to the nearest 8-bit level.
Image8 tensor_to_image(const Tensor4& tensor);

}  // namespace ctiunet
