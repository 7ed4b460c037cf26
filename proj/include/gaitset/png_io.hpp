#ifndef GAITSET_PNG_IO_HPP_
#define GAITSET_PNG_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "gaitset/errors.hpp"

namespace gaitset {

// 8-bit grayscale raster, row-major, top-left origin
struct GrayImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;
};

GrayImage read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, const GrayImage& image);

}  // namespace gaitset

#endif  // GAITSET_PNG_IO_HPP_
