#pragma once

#include <algorithm>
#include <cstdint>

namespace slideanno {

struct Point {
  int64_t x = 0;
  int64_t y = 0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Half-open axis-aligned rectangle [x, x+w) x [y, y+h).
struct Rect {
  int64_t x = 0;
  int64_t y = 0;
  int64_t w = 0;
  int64_t h = 0;

  int64_t right() const { return x + w; }
  int64_t bottom() const { return y + h; }
  bool empty() const { return w <= 0 || h <= 0; }
  bool contains(int64_t px, int64_t py) const {
    return px >= x && px < right() && py >= y && py < bottom();
  }
  bool intersects(const Rect& o) const {
    return x < o.right() && o.x < right() && y < o.bottom() && o.y < bottom();
  }
  Rect intersection(const Rect& o) const {
    const int64_t x0 = std::max(x, o.x);
    const int64_t y0 = std::max(y, o.y);
    const int64_t x1 = std::min(right(), o.right());
    const int64_t y1 = std::min(bottom(), o.bottom());
    if (x1 <= x0 || y1 <= y0) return Rect{x0, y0, 0, 0};
    return Rect{x0, y0, x1 - x0, y1 - y0};
  }
  int64_t area() const { return empty() ? 0 : w * h; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Closed bounding box of a point set; a single point gives min == max.
struct BBox {
  int64_t min_x = 0;
  int64_t min_y = 0;
  int64_t max_x = 0;
  int64_t max_y = 0;

  bool intersects(const Rect& r) const {
    return !r.empty() && max_x >= r.x && min_x < r.right() && max_y >= r.y &&
           min_y < r.bottom();
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Rgb {
  uint8_t r = 0;
  uint8_t g = 0;
  uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kUnknownColor{0, 0, 0};

/// Floor division that rounds toward negative infinity for any sign.
constexpr int64_t floor_div(int64_t a, int64_t b) {
  const int64_t q = a / b;
  return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

constexpr int64_t ceil_div(int64_t a, int64_t b) { return -floor_div(-a, b); }

}  // namespace slideanno
