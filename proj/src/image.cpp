#include "s2w/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "s2w/errors.hpp"

namespace s2w {

ImageRgb ImageRgb::solid(int w, int h, std::uint8_t r, std::uint8_t g,
                         std::uint8_t b) {
  ImageRgb img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
  }
  return img;
}

GrayImage GrayImage::zeros(int w, int h) {
  GrayImage img;
  img.width = w;
  img.height = h;
  img.pixels.assign(static_cast<std::size_t>(w) * h, 0.0f);
  return img;
}

ImageRgb load_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot decode image: " + path);
  ImageRgb img;
  img.width = bgr.cols;
  img.height = bgr.rows;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      std::uint8_t* px = img.at(x, y);
      px[0] = row[x][2];
      px[1] = row[x][1];
      px[2] = row[x][0];
    }
  }
  return img;
}

void save_image_png(const ImageRgb& image, const std::string& path) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      const std::uint8_t* px = image.at(x, y);
      row[x] = cv::Vec3b(px[2], px[1], px[0]);
    }
  }
  if (!cv::imwrite(path, bgr)) throw IoError("cannot write image: " + path);
}

namespace {

std::optional<std::pair<int, int>> probe_png(std::ifstream& in) {
  // 8-byte signature, IHDR chunk follows: len(4) "IHDR" width(4) height(4).
  unsigned char buf[24];
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf), 24);
  if (in.gcount() != 24) return std::nullopt;
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (std::memcmp(buf, sig, 8) != 0) return std::nullopt;
  if (std::memcmp(buf + 12, "IHDR", 4) != 0) return std::nullopt;
  auto be32 = [&](int off) {
    return (buf[off] << 24) | (buf[off + 1] << 16) | (buf[off + 2] << 8) |
           buf[off + 3];
  };
  return std::make_pair(be32(16), be32(20));
}

std::optional<std::pair<int, int>> probe_jpeg(std::ifstream& in) {
  in.seekg(0);
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (in.gcount() != 2 || b[0] != 0xFF || b[1] != 0xD8) return std::nullopt;
  // Walk marker segments until a start-of-frame marker.
  while (in) {
    int c = in.get();
    if (c != 0xFF) continue;
    int marker = in.get();
    while (marker == 0xFF) marker = in.get();
    if (marker < 0) return std::nullopt;
    if (marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD9)) continue;
    unsigned char len_buf[2];
    in.read(reinterpret_cast<char*>(len_buf), 2);
    if (in.gcount() != 2) return std::nullopt;
    const int seg_len = (len_buf[0] << 8) | len_buf[1];
    const bool is_sof = (marker >= 0xC0 && marker <= 0xCF) && marker != 0xC4 &&
                        marker != 0xC8 && marker != 0xCC;
    if (is_sof) {
      unsigned char sof[5];
      in.read(reinterpret_cast<char*>(sof), 5);
      if (in.gcount() != 5) return std::nullopt;
      const int h = (sof[1] << 8) | sof[2];
      const int w = (sof[3] << 8) | sof[4];
      return std::make_pair(w, h);
    }
    in.seekg(seg_len - 2, std::ios::cur);
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::pair<int, int>> probe_image_dims(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  if (auto png = probe_png(in)) return png;
  in.clear();
  if (auto jpg = probe_jpeg(in)) return jpg;
  return std::nullopt;
}

GrayImage to_grayscale(const ImageRgb& image) {
  GrayImage gray;
  gray.width = image.width;
  gray.height = image.height;
  gray.pixels.resize(static_cast<std::size_t>(image.width) * image.height);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
    const std::uint8_t* px = image.pixels.data() + 3 * i;
    const float luma = 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
    gray.pixels[i] = luma / 255.0f;
  }
  return gray;
}

GrayImage crop(const GrayImage& image, const Rect& bounds) {
  const Rect clipped = intersect(bounds.normalized(),
                                 Rect{0, 0, image.width, image.height});
  if (clipped.empty()) return GrayImage{};
  GrayImage out = GrayImage::zeros(clipped.width(), clipped.height());
  for (int y = 0; y < out.height; ++y) {
    const float* src = &image.pixels[(clipped.top + y) * image.width + clipped.left];
    std::copy(src, src + out.width, &out.pixels[y * out.width]);
  }
  return out;
}

GrayImage resize_bilinear(const GrayImage& image, int out_width,
                          int out_height) {
  GrayImage out = GrayImage::zeros(out_width, out_height);
  if (image.width <= 0 || image.height <= 0) return out;
  const double sx = static_cast<double>(image.width) / out_width;
  const double sy = static_cast<double>(image.height) / out_height;
  for (int oy = 0; oy < out_height; ++oy) {
    const double src_y = (oy + 0.5) * sy - 0.5;
    const double fy = std::clamp(src_y, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_width; ++ox) {
      const double src_x = (ox + 0.5) * sx - 0.5;
      const double fx = std::clamp(src_x, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * image.at(x0, y0) + wx * image.at(x1, y0);
      const double bot = (1.0 - wx) * image.at(x0, y1) + wx * image.at(x1, y1);
      out.at(ox, oy) = static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
  return out;
}

}  // namespace s2w
