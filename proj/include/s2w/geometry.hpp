#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

namespace s2w {

// Integer rectangle in screenshot pixel coordinates. Right/bottom are
// exclusive, so area == width * height.
struct Rect {
  int left = 0;
  int top = 0;
  int right = 0;
  int bottom = 0;

  int width() const { return right - left; }
  int height() const { return bottom - top; }
  std::int64_t area() const {
    return static_cast<std::int64_t>(width()) * height();
  }
  bool ordered() const { return left <= right && top <= bottom; }
  bool empty() const { return width() <= 0 || height() <= 0; }

  bool operator==(const Rect&) const = default;

  // Reorders coordinates so left<=right and top<=bottom.
  Rect normalized() const {
    return Rect{std::min(left, right), std::min(top, bottom),
                std::max(left, right), std::max(top, bottom)};
  }

  std::string to_string() const {
    return "(" + std::to_string(left) + "," + std::to_string(top) + "," +
           std::to_string(right) + "," + std::to_string(bottom) + ")";
  }
};

inline Rect intersect(const Rect& a, const Rect& b) {
  Rect r{std::max(a.left, b.left), std::max(a.top, b.top),
         std::min(a.right, b.right), std::min(a.bottom, b.bottom)};
  if (r.left > r.right || r.top > r.bottom) return Rect{0, 0, 0, 0};
  return r;
}

inline double iou(const Rect& a, const Rect& b) {
  const double inter = static_cast<double>(intersect(a, b).area());
  const double uni =
      static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

}  // namespace s2w
