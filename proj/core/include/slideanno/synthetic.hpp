#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slideanno/geometry.hpp"
#include "slideanno/pyramid.hpp"
#include "slideanno/raster.hpp"

namespace slideanno {

/// Axis-aligned elliptical "tissue" region. A pixel (x, y) is covered iff
/// (x-cx)^2 / rx^2 + (y-cy)^2 / ry^2 <= 1.
struct Blob {
  int64_t cx = 0;
  int64_t cy = 0;
  int64_t rx = 1;
  int64_t ry = 1;
  Rgb color{214, 140, 190};

  friend bool operator==(const Blob&, const Blob&) = default;
};

/// Round "cell" drawn on top of blobs. Covered iff (x-cx)^2 + (y-cy)^2 <= r^2.
struct Dot {
  int64_t cx = 0;
  int64_t cy = 0;
  int64_t r = 6;
  Rgb color{70, 30, 110};

  friend bool operator==(const Dot&, const Dot&) = default;
};

struct SyntheticSpec {
  int64_t width = 0;
  int64_t height = 0;
  int tile_size = 256;
  Rgb background{255, 255, 255};
  std::vector<Blob> blobs;
  std::vector<Dot> dots;
  uint64_t seed = 0;
  /// Peak amplitude of the seeded per-pixel texture applied inside blobs.
  int texture = 6;

  /// Throws ValidationError when a shape leaves the extent or a size is bad.
  void validate() const;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

SyntheticSpec parse_synthetic_spec(const std::string& json_text);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);
std::string synthetic_spec_to_json(const SyntheticSpec& spec);

/// Seeded random spec: `blob_count` non-touching blobs and `dot_count` dots
/// placed inside them.
SyntheticSpec random_synthetic_spec(uint64_t seed, int64_t width, int64_t height,
                                    int blob_count, int dot_count, int tile_size = 256);

/// Level-0 rendering of `spec`; the generator writes exactly these pixels.
Raster render_synthetic(const SyntheticSpec& spec);

/// Writes the container plus `truth.json` into `out_dir` and returns the
/// spec that was rendered (the ground truth).
SyntheticSpec generate_synthetic_slide(const SyntheticSpec& spec,
                                       const std::filesystem::path& out_dir);

SyntheticSpec load_truth(const std::filesystem::path& slide_dir);

}  // namespace slideanno
