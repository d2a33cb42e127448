#include "slideanno/pyramid.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "slideanno/error.hpp"

namespace slideanno {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<uint64_t> g_next_slide_uid{1};

bool is_power_of_two(double d) {
  if (!(d >= 1.0) || !std::isfinite(d)) return false;
  int exp = 0;
  const double mant = std::frexp(d, &exp);
  return mant == 0.5;
}

int64_t as_factor(double downsample) { return static_cast<int64_t>(downsample); }

}  // namespace

PyramidLayout PyramidLayout::for_extent(int64_t width, int64_t height, int tile_size) {
  if (width <= 0 || height <= 0) throw ValidationError("slide extent must be positive");
  if (tile_size <= 0) throw ValidationError("tile_size must be positive");
  PyramidLayout layout;
  layout.width = width;
  layout.height = height;
  layout.tile_size = tile_size;
  int64_t factor = 1;
  for (;;) {
    LevelInfo lv;
    lv.downsample = static_cast<double>(factor);
    lv.width = ceil_div(width, factor);
    lv.height = ceil_div(height, factor);
    lv.cols = ceil_div(lv.width, tile_size);
    lv.rows = ceil_div(lv.height, tile_size);
    layout.levels.push_back(lv);
    if (std::max(lv.width, lv.height) <= tile_size) break;
    factor *= 2;
  }
  return layout;
}

void PyramidLayout::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("slide extent must be positive");
  if (tile_size <= 0) throw ValidationError("tile_size must be positive");
  if (levels.empty()) throw ValidationError("container declares no levels");
  if (levels[0].downsample != 1.0) throw ValidationError("level 0 downsample must be 1");
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const LevelInfo& lv = levels[k];
    const std::string where = "level " + std::to_string(k) + ": ";
    if (!is_power_of_two(lv.downsample)) {
      throw ValidationError(where + "downsample is not a power of two");
    }
    if (k > 0 && !(lv.downsample > levels[k - 1].downsample)) {
      throw ValidationError(where + "downsamples must be strictly increasing");
    }
    const int64_t f = as_factor(lv.downsample);
    if (lv.width != ceil_div(width, f) || lv.height != ceil_div(height, f)) {
      throw ValidationError(where + "dimensions do not match downsample");
    }
    if (lv.cols != ceil_div(lv.width, tile_size) || lv.rows != ceil_div(lv.height, tile_size)) {
      throw ValidationError(where + "tile grid does not match dimensions");
    }
  }
}

int best_level_for_downsample(const PyramidLayout& layout, double target) {
  int best = 0;
  for (int k = 0; k < static_cast<int>(layout.levels.size()); ++k) {
    if (layout.levels[k].downsample <= target) best = k;
  }
  return best;
}

fs::path tile_path(const fs::path& dir, int level, int64_t col, int64_t row) {
  return dir / "tiles" / ("L" + std::to_string(level)) /
         (std::to_string(col) + "_" + std::to_string(row) + ".png");
}

PyramidSlide PyramidSlide::open(const fs::path& dir, std::shared_ptr<TileCache> cache) {
  const fs::path manifest = dir / "manifest.json";
  std::ifstream f(manifest);
  if (!f) throw FormatError("no manifest.json in " + dir.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError("corrupt manifest " + manifest.string() + ": " + e.what());
  }

  PyramidSlide slide;
  try {
    if (doc.at("version").get<int>() != kContainerVersion) {
      throw FormatError("unsupported container version in " + manifest.string());
    }
    slide.layout_.width = doc.at("width").get<int64_t>();
    slide.layout_.height = doc.at("height").get<int64_t>();
    slide.layout_.tile_size = doc.at("tile_size").get<int>();
    for (const auto& lv : doc.at("levels")) {
      LevelInfo info;
      info.downsample = lv.at("downsample").get<double>();
      info.width = lv.at("width").get<int64_t>();
      info.height = lv.at("height").get<int64_t>();
      info.cols = lv.at("cols").get<int64_t>();
      info.rows = lv.at("rows").get<int64_t>();
      slide.layout_.levels.push_back(info);
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + manifest.string() + ": " + e.what());
  }
  slide.layout_.validate();
  slide.dir_ = dir;
  slide.uid_ = g_next_slide_uid.fetch_add(1);
  slide.cache_ = cache ? std::move(cache) : std::make_shared<TileCache>();
  return slide;
}

const LevelInfo& PyramidSlide::level(int index) const {
  if (index < 0 || index >= level_count()) {
    throw RangeError("level " + std::to_string(index) + " out of range");
  }
  return layout_.levels[index];
}

Raster PyramidSlide::load_tile(int level, int64_t col, int64_t row) const {
  const LevelInfo& lv = layout_.levels[level];
  const int ts = layout_.tile_size;
  Raster tile = read_png_file(tile_path(dir_, level, col, row));
  const int64_t expect_w = std::min<int64_t>(ts, lv.width - col * ts);
  const int64_t expect_h = std::min<int64_t>(ts, lv.height - row * ts);
  if (tile.width() != expect_w || tile.height() != expect_h) {
    throw FormatError("tile L" + std::to_string(level) + "/" + std::to_string(col) + "_" +
                      std::to_string(row) + " has unexpected size");
  }
  return tile;
}

Raster PyramidSlide::read_region(int level_index, Point origin, int w, int h) const {
  const LevelInfo& lv = level(level_index);
  if (w <= 0 || h <= 0) throw RangeError("region size must be positive");
  const int64_t factor = as_factor(lv.downsample);
  const int ts = layout_.tile_size;
  Raster out(w, h);

  const Rect want{floor_div(origin.x, factor), floor_div(origin.y, factor), w, h};
  const Rect avail = want.intersection(Rect{0, 0, lv.width, lv.height});
  if (avail.empty()) return out;

  const int64_t col0 = avail.x / ts;
  const int64_t col1 = (avail.right() - 1) / ts;
  const int64_t row0 = avail.y / ts;
  const int64_t row1 = (avail.bottom() - 1) / ts;
  for (int64_t row = row0; row <= row1; ++row) {
    for (int64_t col = col0; col <= col1; ++col) {
      auto tile = cache_->get_or_load(TileKey{uid_, level_index, col, row},
                                      [&] { return load_tile(level_index, col, row); });
      const Rect tile_rect{col * ts, row * ts, tile->width(), tile->height()};
      const Rect part = tile_rect.intersection(avail);
      if (part.empty()) continue;
      const std::size_t bytes = static_cast<std::size_t>(part.w) * 4;
      for (int64_t y = part.y; y < part.bottom(); ++y) {
        const uint8_t* src = tile->pixel(static_cast<int>(part.x - tile_rect.x),
                                         static_cast<int>(y - tile_rect.y));
        uint8_t* dst = out.pixel(static_cast<int>(part.x - want.x),
                                 static_cast<int>(y - want.y));
        std::memcpy(dst, src, bytes);
      }
    }
  }
  return out;
}

Raster box_downsample(const Raster& src, int factor) {
  if (factor < 1) throw RangeError("downsample factor must be >= 1");
  if (factor == 1) return src;
  const int out_w = static_cast<int>(ceil_div(src.width(), factor));
  const int out_h = static_cast<int>(ceil_div(src.height(), factor));
  Raster out(out_w, out_h);
  const uint64_t n = static_cast<uint64_t>(factor) * factor;
  std::vector<uint64_t> acc(static_cast<std::size_t>(out_w) * 4);
  for (int oy = 0; oy < out_h; ++oy) {
    std::fill(acc.begin(), acc.end(), 0);
    const int y_end = std::min(src.height(), (oy + 1) * factor);
    const int rows_in = y_end - oy * factor;
    for (int y = oy * factor; y < y_end; ++y) {
      const auto row = src.row(y);
      for (int x = 0; x < src.width(); ++x) {
        uint64_t* a = &acc[static_cast<std::size_t>(x / factor) * 4];
        const uint8_t* p = &row[static_cast<std::size_t>(x) * 4];
        a[0] += p[0];
        a[1] += p[1];
        a[2] += p[2];
        a[3] += p[3];
      }
    }
    for (int ox = 0; ox < out_w; ++ox) {
      const int cols_in = std::min(src.width(), (ox + 1) * factor) - ox * factor;
      const uint64_t pad = n - static_cast<uint64_t>(rows_in) * cols_in;
      uint8_t* dst = out.pixel(ox, oy);
      for (int c = 0; c < 4; ++c) {
        const uint64_t sum = acc[static_cast<std::size_t>(ox) * 4 + c] + pad * 255;
        dst[c] = static_cast<uint8_t>((sum + n / 2) / n);
      }
    }
  }
  return out;
}

PyramidLayout write_pyramid(const Raster& level0, int tile_size, const fs::path& dir) {
  PyramidLayout layout = PyramidLayout::for_extent(level0.width(), level0.height(), tile_size);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  for (std::size_t k = 0; k < layout.levels.size(); ++k) {
    const LevelInfo& lv = layout.levels[k];
    const Raster img = box_downsample(level0, static_cast<int>(as_factor(lv.downsample)));
    const fs::path level_dir = dir / "tiles" / ("L" + std::to_string(k));
    fs::create_directories(level_dir, ec);
    if (ec) throw IoError("cannot create " + level_dir.string() + ": " + ec.message());
    for (int64_t row = 0; row < lv.rows; ++row) {
      for (int64_t col = 0; col < lv.cols; ++col) {
        const int x0 = static_cast<int>(col * tile_size);
        const int y0 = static_cast<int>(row * tile_size);
        const int tw = std::min<int>(tile_size, img.width() - x0);
        const int th = std::min<int>(tile_size, img.height() - y0);
        Raster tile(tw, th);
        for (int y = 0; y < th; ++y) {
          std::memcpy(tile.pixel(0, y), img.pixel(x0, y0 + y),
                      static_cast<std::size_t>(tw) * 4);
        }
        write_png_file(tile, tile_path(dir, static_cast<int>(k), col, row));
      }
    }
  }

  json manifest{{"version", kContainerVersion},
                {"width", layout.width},
                {"height", layout.height},
                {"tile_size", layout.tile_size},
                {"levels", json::array()}};
  for (const auto& lv : layout.levels) {
    manifest["levels"].push_back({{"downsample", lv.downsample},
                                  {"width", lv.width},
                                  {"height", lv.height},
                                  {"cols", lv.cols},
                                  {"rows", lv.rows}});
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("manifest write failed in " + dir.string());
  return layout;
}

}  // namespace slideanno
