#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace swinchex {

// 8-bit interleaved image, 1 (gray) or 3 (RGB) channels.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

// Reads 8-bit gray, gray+alpha, RGB, RGBA or palette PNGs. Alpha is dropped.
// 16-bit files are rejected.
Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& image);

}  // namespace swinchex
