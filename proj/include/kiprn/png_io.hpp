#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kiprn/common.hpp"
#include "kiprn/tensor.hpp"

namespace kiprn {

// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;

  uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

// Encoding always emits filter-0 rows compressed at a fixed level, so the
// same pixels produce the same bytes. Decoding accepts 8-bit gray or RGB,
// non-interlaced, any of the five row filters.
std::vector<uint8_t> encode_png(const Image& img);
Image decode_png(const uint8_t* data, size_t size);

void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Tensor round trip: save clamps a [3,H,W] tensor in [0,1] to 8-bit RGB;
// load maps 8-bit RGB back to [0,1], so the round-trip error stays within
// one quantization step.
void save_png_tensor(const std::string& path, const TensorF& t);
TensorF load_png_tensor(const std::string& path);

}  // namespace kiprn
