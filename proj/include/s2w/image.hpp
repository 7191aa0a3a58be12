#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s2w/geometry.hpp"

namespace s2w {

// Interleaved 8-bit RGB image.
struct ImageRgb {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // size = width*height*3

  static ImageRgb solid(int w, int h, std::uint8_t r, std::uint8_t g,
                        std::uint8_t b);
  std::uint8_t* at(int x, int y) { return pixels.data() + 3 * (y * width + x); }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + 3 * (y * width + x);
  }
};

// Single-channel float image with values in [0,1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // size = width*height, row-major

  static GrayImage zeros(int w, int h);
  float& at(int x, int y) { return pixels[y * width + x]; }
  float at(int x, int y) const { return pixels[y * width + x]; }
};

ImageRgb load_image(const std::string& path);
void save_image_png(const ImageRgb& image, const std::string& path);

// Reads only enough of a PNG/JPEG header to recover (width, height).
// Returns nullopt when the format is not recognized.
std::optional<std::pair<int, int>> probe_image_dims(const std::string& path);

// ITU-R BT.601 luma: 0.299 R + 0.587 G + 0.114 B, scaled to [0,1].
GrayImage to_grayscale(const ImageRgb& image);

// Copies the intersection of `bounds` with the image. An empty intersection
// yields a 0x0 image.
GrayImage crop(const GrayImage& image, const Rect& bounds);

// Bilinear resampling with half-pixel-centered sample coordinates.
GrayImage resize_bilinear(const GrayImage& image, int out_width,
                          int out_height);

}  // namespace s2w
