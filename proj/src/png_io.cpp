#include "gaitset/png_io.hpp"

#include <png.h>

#include <cstring>

namespace gaitset {

GrayImage read_png_gray(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw DataError("cannot read png " + path + ": " + img.message);
  img.format = PNG_FORMAT_GRAY;
  GrayImage out;
  out.height = img.height;
  out.width = img.width;
  out.pixels.resize(static_cast<size_t>(img.height) * img.width);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string message = img.message;
    png_image_free(&img);
    throw DataError("cannot decode png " + path + ": " + message);
  }
  return out;
}

void write_png_gray(const std::string& path, const GrayImage& image) {
  if (image.height <= 0 || image.width <= 0 ||
      image.pixels.size() != static_cast<size_t>(image.height) * image.width)
    throw DataError("write_png_gray: inconsistent raster for " + path);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw DataError("cannot write png " + path + ": " + img.message);
}

}  // namespace gaitset
