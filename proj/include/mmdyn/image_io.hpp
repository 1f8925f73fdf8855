// 8-bit image files: PNG (grayscale or RGB) and binary PGM/PPM.
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mmdyn {

struct Image8 {
  int height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> pixels;  // H x W x C row-major
};

Image8 read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image8& image);

// Rounds v*255 half-up after clamping v to [0, 1].
std::uint8_t to_byte(double v);

}  // namespace mmdyn
