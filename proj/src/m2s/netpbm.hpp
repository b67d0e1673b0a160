#pragma once

// 8-bit PGM (P2/P5) and PPM (P3/P6) codec.

#include <cstdint>
#include <filesystem>
#include <vector>

namespace m2s {

struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 (PGM) or 3 (PPM)
  std::vector<std::uint8_t> pixels;  // row-major, interleaved channels

  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
};

Image8 parse_netpbm(const std::vector<std::uint8_t>& bytes);
Image8 read_netpbm(const std::filesystem::path& path);

// Binary P5 for one channel, P6 for three.
std::vector<std::uint8_t> encode_netpbm(const Image8& img);
void write_netpbm(const std::filesystem::path& path, const Image8& img);

}  // namespace m2s
