#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "slideanno/geometry.hpp"
#include "slideanno/raster.hpp"
#include "slideanno/tile_cache.hpp"

namespace slideanno {

inline constexpr int kContainerVersion = 1;

struct LevelInfo {
  double downsample = 1.0;
  int64_t width = 0;
  int64_t height = 0;
  int64_t cols = 0;
  int64_t rows = 0;

  friend bool operator==(const LevelInfo&, const LevelInfo&) = default;
};

/// Geometry of a pyramid container, independent of any pixel data.
struct PyramidLayout {
  int64_t width = 0;
  int64_t height = 0;
  int tile_size = 256;
  std::vector<LevelInfo> levels;

  /// Levels halve until the coarsest one fits into a single tile.
  static PyramidLayout for_extent(int64_t width, int64_t height, int tile_size);

  /// Throws ValidationError on any broken invariant.
  void validate() const;

  friend bool operator==(const PyramidLayout&, const PyramidLayout&) = default;
};

/// Highest-resolution level whose downsample does not exceed `target`.
/// Targets beyond the coarsest level clamp to it.
int best_level_for_downsample(const PyramidLayout& layout, double target);

/// Read-only handle on a tiled multi-resolution slide stored on disk.
///
/// Tiles are decoded lazily and kept in a TileCache, so opening a slide
/// only parses the manifest. All member functions are safe to call from
/// several threads at once.
class PyramidSlide {
 public:
  /// Opens the container directory at `dir`. Throws FormatError for a
  /// missing or malformed manifest and ValidationError for broken geometry.
  static PyramidSlide open(const std::filesystem::path& dir,
                           std::shared_ptr<TileCache> cache = nullptr);

  const PyramidLayout& layout() const { return layout_; }
  int64_t width() const { return layout_.width; }
  int64_t height() const { return layout_.height; }
  int tile_size() const { return layout_.tile_size; }
  int level_count() const { return static_cast<int>(layout_.levels.size()); }
  const LevelInfo& level(int index) const;
  const std::filesystem::path& path() const { return dir_; }

  /// Reads a w x h block of level `level` pixels. The origin is given in
  /// level-0 coordinates and mapped down by floor division. Anything outside
  /// the slide comes back opaque white.
  Raster read_region(int level, Point origin, int w, int h) const;

  int best_level_for_downsample(double target) const {
    return slideanno::best_level_for_downsample(layout_, target);
  }

  TileCache& cache() const { return *cache_; }

 private:
  PyramidSlide() = default;
  Raster load_tile(int level, int64_t col, int64_t row) const;

  std::filesystem::path dir_;
  PyramidLayout layout_;
  uint64_t uid_ = 0;
  std::shared_ptr<TileCache> cache_;
};

inline PyramidSlide open_slide(const std::filesystem::path& dir,
                               std::shared_ptr<TileCache> cache = nullptr) {
  return PyramidSlide::open(dir, std::move(cache));
}

std::filesystem::path tile_path(const std::filesystem::path& dir, int level,
                                int64_t col, int64_t row);

/// Writes a complete container for a level-0 raster. Every level k > 0 is an
/// exact integer box filter over 2^k x 2^k blocks of level 0, with pixels
/// beyond the slide extent counted as white.
PyramidLayout write_pyramid(const Raster& level0, int tile_size,
                            const std::filesystem::path& dir);

/// Integer box-filter reduction by `factor`, padding with opaque white.
/// Output size is ceil(src / factor).
Raster box_downsample(const Raster& src, int factor);

}  // namespace slideanno
