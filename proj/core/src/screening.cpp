#include "slideanno/screening.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "slideanno/error.hpp"

namespace slideanno {

namespace fs = std::filesystem;
using nlohmann::json;

OtsuResult otsu_threshold(const Histogram& h) {
  uint64_t total = 0;
  unsigned __int128 sum = 0;
  int nonzero_bins = 0;
  int last_bin = 0;
  for (int g = 0; g < 256; ++g) {
    total += h[g];
    sum += static_cast<unsigned __int128>(h[g]) * g;
    if (h[g] != 0) {
      ++nonzero_bins;
      last_bin = g;
    }
  }
  if (total == 0) throw RangeError("otsu_threshold: empty histogram");
  if (nonzero_bins == 1) return OtsuResult{last_bin, true};

  // Between-class variance scaled by N^2: (S0*N1 - S1*N0)^2 / (N0*N1).
  int best_t = 0;
  long double best = -1.0L;
  uint64_t n0 = 0;
  unsigned __int128 s0 = 0;
  for (int t = 0; t <= 256; ++t) {
    if (t > 0) {
      n0 += h[t - 1];
      s0 += static_cast<unsigned __int128>(h[t - 1]) * (t - 1);
    }
    const uint64_t n1 = total - n0;
    long double score = 0.0L;
    if (n0 != 0 && n1 != 0) {
      const unsigned __int128 s1 = sum - s0;
      const __int128 diff = static_cast<__int128>(s0 * n1) - static_cast<__int128>(s1 * n0);
      const long double d = static_cast<long double>(diff);
      score = d * d / (static_cast<long double>(n0) * static_cast<long double>(n1));
    }
    if (score > best) {
      best = score;
      best_t = t;
    }
  }
  return OtsuResult{best_t, false};
}

Histogram luminance_histogram(const Raster& raster) {
  Histogram h{};
  for (int y = 0; y < raster.height(); ++y) {
    const auto row = raster.row(y);
    for (std::size_t i = 0; i < row.size(); i += 4) ++h[luminance(row[i], row[i + 1], row[i + 2])];
  }
  return h;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), uint8_t{1}));
}

bool BinaryMask::subset_of(const BinaryMask& other) const {
  if (width_ != other.width_ || height_ != other.height_) return false;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] && !other.bits_[i]) return false;
  }
  return true;
}

namespace {

// Summed-area table with a zero row/column in front.
class Integral {
 public:
  Integral(int w, int h) : w_(w), h_(h), s_(static_cast<std::size_t>(w + 1) * (h + 1), 0) {}

  template <class Pred>
  void build(Pred&& on) {
    for (int y = 0; y < h_; ++y) {
      int64_t run = 0;
      for (int x = 0; x < w_; ++x) {
        run += on(x, y) ? 1 : 0;
        at(x + 1, y + 1) = at(x + 1, y) + run;
      }
    }
  }

  // Count over [x0, x1) x [y0, y1), clipped to the table.
  int64_t sum(int x0, int y0, int x1, int y1) const {
    x0 = std::clamp(x0, 0, w_);
    x1 = std::clamp(x1, 0, w_);
    y0 = std::clamp(y0, 0, h_);
    y1 = std::clamp(y1, 0, h_);
    if (x1 <= x0 || y1 <= y0) return 0;
    return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
  }

 private:
  int64_t& at(int x, int y) { return s_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
  int64_t at(int x, int y) const { return s_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }

  int w_, h_;
  std::vector<int64_t> s_;
};

}  // namespace

BinaryMask morphological_close(const BinaryMask& mask, int se_radius) {
  if (se_radius < 0) throw RangeError("se_radius must be >= 0");
  if (se_radius == 0 || mask.width() == 0 || mask.height() == 0) return mask;
  const int r = se_radius;
  const int w = mask.width(), h = mask.height();

  Integral input(w, h);
  input.build([&](int x, int y) { return mask.get(x, y); });

  // Dilation over a frame of r pixels around the image; erosion at an
  // image pixel never looks further out than that.
  const int pw = w + 2 * r, ph = h + 2 * r;
  Integral dilated(pw, ph);
  dilated.build([&](int px, int py) {
    const int x = px - r, y = py - r;
    return input.sum(x - r, y - r, x + r + 1, y + r + 1) > 0;
  });

  const int64_t full = static_cast<int64_t>(2 * r + 1) * (2 * r + 1);
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int px = x + r, py = y + r;
      out.set(x, y, dilated.sum(px - r, py - r, px + r + 1, py + r + 1) == full);
    }
  }
  return out;
}

double TissueMask::tissue_fraction() const {
  const std::size_t n = static_cast<std::size_t>(mask.width()) * mask.height();
  return n == 0 ? 0.0 : static_cast<double>(mask.count()) / static_cast<double>(n);
}

Rect TissueMask::footprint(int mx, int my) const {
  return Rect{mx * scale, my * scale, scale, scale}.intersection(
      Rect{0, 0, slide_width, slide_height});
}

TissueMask tissue_mask_from_overview(const Raster& overview, int overview_level, int64_t scale,
                                     int64_t slide_width, int64_t slide_height, int se_radius) {
  TissueMask tm;
  tm.overview_level = overview_level;
  tm.scale = scale;
  tm.slide_width = slide_width;
  tm.slide_height = slide_height;
  tm.otsu = otsu_threshold(luminance_histogram(overview));

  BinaryMask raw(overview.width(), overview.height());
  if (!tm.otsu.degenerate) {
    for (int y = 0; y < overview.height(); ++y) {
      for (int x = 0; x < overview.width(); ++x) {
        const uint8_t* p = overview.pixel(x, y);
        raw.set(x, y, luminance(p[0], p[1], p[2]) < tm.otsu.threshold);
      }
    }
  }
  tm.mask = morphological_close(raw, se_radius);
  return tm;
}

TissueMask compute_tissue_mask(const PyramidSlide& slide, double overview_downsample_target,
                               int se_radius) {
  const int level = slide.best_level_for_downsample(overview_downsample_target);
  const LevelInfo& lv = slide.level(level);
  const Raster overview =
      slide.read_region(level, Point{0, 0}, static_cast<int>(lv.width), static_cast<int>(lv.height));
  return tissue_mask_from_overview(overview, level, static_cast<int64_t>(lv.downsample),
                                   slide.width(), slide.height(), se_radius);
}

std::optional<Rect> ScreeningPlan::navigate(Direction direction) {
  switch (direction) {
    case Direction::Next:
      if (cursor >= cells.size()) {
        cursor = cells.size();
        return std::nullopt;
      }
      ++cursor;
      return cells[cursor - 1].rect;
    case Direction::Prev:
      if (cursor > 0) --cursor;
      return current();
    case Direction::Current:
      return current();
  }
  return std::nullopt;
}

std::optional<Rect> ScreeningPlan::current() const {
  if (cursor == 0 || cursor > cells.size()) return std::nullopt;
  return cells[cursor - 1].rect;
}

double ScreeningPlan::progress() const {
  if (cells.empty()) return 1.0;
  return static_cast<double>(cursor) / static_cast<double>(cells.size());
}

ScreeningPlan build_screening_plan(const TissueMask& tm, int64_t cell_size, double occupancy_min,
                                   int64_t slide_id) {
  if (cell_size <= 0) throw RangeError("cell_size must be positive");
  if (!(occupancy_min > 0.0 && occupancy_min <= 1.0)) {
    throw RangeError("occupancy_min must lie in (0, 1]");
  }
  ScreeningPlan plan;
  plan.slide_id = slide_id;
  plan.cell_size = cell_size;
  plan.occupancy_min = occupancy_min;

  const Rect slide_rect{0, 0, tm.slide_width, tm.slide_height};
  const int64_t rows = ceil_div(tm.slide_height, cell_size);
  const int64_t cols = ceil_div(tm.slide_width, cell_size);
  const int64_t s = tm.scale;
  for (int64_t row = 0; row < rows; ++row) {
    for (int64_t col = 0; col < cols; ++col) {
      const Rect cell =
          Rect{col * cell_size, row * cell_size, cell_size, cell_size}.intersection(slide_rect);
      if (cell.empty()) continue;
      int64_t tissue_area = 0;
      const int64_t mx0 = cell.x / s, mx1 = (cell.right() - 1) / s;
      const int64_t my0 = cell.y / s, my1 = (cell.bottom() - 1) / s;
      for (int64_t my = my0; my <= my1; ++my) {
        for (int64_t mx = mx0; mx <= mx1; ++mx) {
          if (!tm.mask.at(mx, my)) continue;
          tissue_area += tm.footprint(static_cast<int>(mx), static_cast<int>(my))
                             .intersection(cell)
                             .area();
        }
      }
      if (tissue_area > 0 &&
          static_cast<double>(tissue_area) >= occupancy_min * static_cast<double>(cell.area())) {
        plan.cells.push_back(GridCell{row, col, cell});
      }
    }
  }
  return plan;
}

std::string plan_to_json(const ScreeningPlan& plan) {
  json doc{{"slide_id", plan.slide_id},
           {"cell_size", plan.cell_size},
           {"occupancy_min", plan.occupancy_min},
           {"cells", json::array()}};
  for (const auto& c : plan.cells) {
    doc["cells"].push_back({{"x", c.rect.x}, {"y", c.rect.y}, {"w", c.rect.w}, {"h", c.rect.h},
                            {"row", c.row}, {"col", c.col}});
  }
  return doc.dump(2);
}

std::string mask_to_pbm(const BinaryMask& mask) {
  std::string out = "P4\n" + std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n";
  const int row_bytes = (mask.width() + 7) / 8;
  for (int y = 0; y < mask.height(); ++y) {
    std::string row(static_cast<std::size_t>(row_bytes), '\0');
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.get(x, y)) row[x / 8] = static_cast<char>(row[x / 8] | (0x80 >> (x % 8)));
    }
    out += row;
  }
  return out;
}

void write_pbm(const BinaryMask& mask, const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  const std::string data = mask_to_pbm(mask);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

BinaryMask read_pbm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  f >> magic >> w >> h;
  if (magic != "P4" || w <= 0 || h <= 0) throw FormatError("not a binary PBM: " + path.string());
  f.get();
  const int row_bytes = (w + 7) / 8;
  BinaryMask mask(w, h);
  std::string row(static_cast<std::size_t>(row_bytes), '\0');
  for (int y = 0; y < h; ++y) {
    if (!f.read(row.data(), row_bytes)) throw FormatError("truncated PBM: " + path.string());
    for (int x = 0; x < w; ++x) mask.set(x, y, (static_cast<uint8_t>(row[x / 8]) >> (7 - x % 8)) & 1);
  }
  return mask;
}

}  // namespace slideanno
