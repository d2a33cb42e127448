#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slideanno/geometry.hpp"
#include "slideanno/pyramid.hpp"
#include "slideanno/raster.hpp"

namespace slideanno {

inline constexpr double kDefaultOverviewDownsample = 32.0;
inline constexpr int kDefaultSeRadius = 2;
inline constexpr double kDefaultOccupancyMin = 0.05;
inline constexpr int64_t kDefaultCellSize = 1024;

using Histogram = std::array<uint64_t, 256>;

struct OtsuResult {
  /// Gray values strictly below the threshold are tissue.
  int threshold = 0;
  /// All mass sat in a single bin; `threshold` is that bin.
  bool degenerate = false;

  friend bool operator==(const OtsuResult&, const OtsuResult&) = default;
};

/// Otsu's method: the t maximising w0*w1*(mu0-mu1)^2 for the split
/// {g < t} / {g >= t}, smallest t on ties. Throws RangeError on an empty
/// histogram.
OtsuResult otsu_threshold(const Histogram& histogram);

/// Rec.601 luma with integer per-mille weights, rounded to nearest.
constexpr uint8_t luminance(uint8_t r, uint8_t g, uint8_t b) {
  return static_cast<uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

Histogram luminance_histogram(const Raster& raster);

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false)
      : width_(width), height_(height),
        bits_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool get(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v) { bits_[index(x, y)] = v ? 1 : 0; }
  /// Out-of-range coordinates read as false.
  bool at(int64_t x, int64_t y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_ && get(static_cast<int>(x), static_cast<int>(y));
  }
  std::size_t count() const;
  bool subset_of(const BinaryMask& other) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<uint8_t> bits_;
};

/// Closing with a (2r+1)^2 square: dilation followed by erosion. The input
/// is treated as false outside its bounds, so the result always contains
/// the input. Radius 0 is the identity.
BinaryMask morphological_close(const BinaryMask& mask, int se_radius);

struct TissueMask {
  BinaryMask mask;
  int overview_level = 0;
  /// Level-0 pixels per mask pixel.
  int64_t scale = 1;
  int64_t slide_width = 0;
  int64_t slide_height = 0;
  OtsuResult otsu;

  double tissue_fraction() const;
  /// Level-0 footprint of mask pixel (mx, my), clipped to the slide.
  Rect footprint(int mx, int my) const;
};

/// Thresholds an already-read overview raster and closes the result.
TissueMask tissue_mask_from_overview(const Raster& overview, int overview_level, int64_t scale,
                                     int64_t slide_width, int64_t slide_height, int se_radius);

TissueMask compute_tissue_mask(const PyramidSlide& slide,
                               double overview_downsample_target = kDefaultOverviewDownsample,
                               int se_radius = kDefaultSeRadius);

struct GridCell {
  int64_t row = 0;
  int64_t col = 0;
  Rect rect;  // level-0, clipped at the slide edge

  friend bool operator==(const GridCell&, const GridCell&) = default;
};

enum class Direction { Next, Prev, Current };

/// Ordered fields of view covering the tissue. `cursor` counts cells handed
/// out so far; the current cell is cells[cursor - 1].
struct ScreeningPlan {
  int64_t slide_id = 0;
  int64_t cell_size = kDefaultCellSize;
  double occupancy_min = kDefaultOccupancyMin;
  std::vector<GridCell> cells;
  std::size_t cursor = 0;

  std::optional<Rect> navigate(Direction direction);
  std::optional<Rect> next() { return navigate(Direction::Next); }
  std::optional<Rect> prev() { return navigate(Direction::Prev); }
  std::optional<Rect> current() const;
  /// cursor / |cells|; an empty plan counts as complete.
  double progress() const;
  bool exhausted() const { return cursor >= cells.size(); }
};

/// Projects a cell_size grid anchored at the slide origin and keeps every
/// cell whose tissue area fraction is at least `occupancy_min` (and > 0),
/// in row-major order.
ScreeningPlan build_screening_plan(const TissueMask& mask, int64_t cell_size = kDefaultCellSize,
                                   double occupancy_min = kDefaultOccupancyMin,
                                   int64_t slide_id = 0);

std::string plan_to_json(const ScreeningPlan& plan);

/// Binary PBM (P4); tissue pixels are 1 (black).
std::string mask_to_pbm(const BinaryMask& mask);
void write_pbm(const BinaryMask& mask, const std::filesystem::path& path);
BinaryMask read_pbm(const std::filesystem::path& path);

}  // namespace slideanno
