#pragma once

// PNG/JPEG codec boundary. Everything else in the library works on in-memory
// buffers; only this unit touches the codec library.

#include <string>

#include "dualstream/image.hpp"

namespace dualstream {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // row-major, RGB interleaved
};

// Loads PNG or JPEG as grayscale. Throws DataError naming the path on failure.
Image load_image(const std::string& path);

void save_png(const Image& img, const std::string& path);
void save_png_rgb(const RgbImage& img, const std::string& path);

}  // namespace dualstream
