#include "slideanno/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "slideanno/error.hpp"

namespace slideanno {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json rgb_to_json(const Rgb& c) { return json::array({c.r, c.g, c.b}); }

Rgb rgb_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("color must be [r,g,b]");
  auto channel = [](const json& v) {
    const int c = v.get<int>();
    if (c < 0 || c > 255) throw ValidationError("color channel out of range");
    return static_cast<uint8_t>(c);
  };
  return Rgb{channel(j[0]), channel(j[1]), channel(j[2])};
}

// splitmix64 finaliser; texture must depend only on (seed, x, y).
uint64_t mix(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

int texture_offset(uint64_t seed, int64_t x, int64_t y, int amplitude) {
  if (amplitude <= 0) return 0;
  const uint64_t h = mix(seed ^ mix(static_cast<uint64_t>(x) * 0x100000001b3ull ^
                                    mix(static_cast<uint64_t>(y))));
  return static_cast<int>(h % static_cast<uint64_t>(2 * amplitude + 1)) - amplitude;
}

uint8_t clamp_channel(int v) { return static_cast<uint8_t>(std::clamp(v, 0, 255)); }

bool inside_ellipse(int64_t dx, int64_t dy, int64_t rx, int64_t ry) {
  // dx^2 ry^2 + dy^2 rx^2 <= rx^2 ry^2, exact in integers.
  const __int128 lhs = static_cast<__int128>(dx * dx) * (ry * ry) +
                       static_cast<__int128>(dy * dy) * (rx * rx);
  return lhs <= static_cast<__int128>(rx * rx) * (ry * ry);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("synthetic extent must be positive");
  if (width > (1 << 20) || height > (1 << 20)) throw ValidationError("synthetic extent too large");
  if (tile_size <= 0) throw ValidationError("tile_size must be positive");
  if (texture < 0 || texture > 64) throw ValidationError("texture must be in [0, 64]");
  for (const auto& b : blobs) {
    if (b.rx < 1 || b.ry < 1) throw ValidationError("blob radii must be >= 1");
    if (b.cx - b.rx < 0 || b.cy - b.ry < 0 || b.cx + b.rx >= width || b.cy + b.ry >= height) {
      throw ValidationError("blob at (" + std::to_string(b.cx) + "," + std::to_string(b.cy) +
                            ") exceeds slide bounds");
    }
  }
  for (const auto& d : dots) {
    if (d.r < 0) throw ValidationError("dot radius must be >= 0");
    if (d.cx - d.r < 0 || d.cy - d.r < 0 || d.cx + d.r >= width || d.cy + d.r >= height) {
      throw ValidationError("dot at (" + std::to_string(d.cx) + "," + std::to_string(d.cy) +
                            ") exceeds slide bounds");
    }
  }
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
  SyntheticSpec spec;
  try {
    const json doc = json::parse(json_text);
    spec.width = doc.at("width").get<int64_t>();
    spec.height = doc.at("height").get<int64_t>();
    spec.tile_size = doc.value("tile_size", 256);
    spec.seed = doc.value("seed", uint64_t{0});
    spec.texture = doc.value("texture", 6);
    if (doc.contains("background")) spec.background = rgb_from_json(doc["background"]);
    for (const auto& b : doc.value("blobs", json::array())) {
      Blob blob;
      blob.cx = b.at("cx").get<int64_t>();
      blob.cy = b.at("cy").get<int64_t>();
      blob.rx = b.at("rx").get<int64_t>();
      blob.ry = b.at("ry").get<int64_t>();
      if (b.contains("color")) blob.color = rgb_from_json(b["color"]);
      spec.blobs.push_back(blob);
    }
    for (const auto& d : doc.value("dots", json::array())) {
      Dot dot;
      dot.cx = d.at("cx").get<int64_t>();
      dot.cy = d.at("cy").get<int64_t>();
      dot.r = d.at("r").get<int64_t>();
      if (d.contains("color")) dot.color = rgb_from_json(d["color"]);
      spec.dots.push_back(dot);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid synthetic spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

SyntheticSpec load_synthetic_spec(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_synthetic_spec(ss.str());
}

std::string synthetic_spec_to_json(const SyntheticSpec& spec) {
  json doc{{"width", spec.width},
           {"height", spec.height},
           {"tile_size", spec.tile_size},
           {"seed", spec.seed},
           {"texture", spec.texture},
           {"background", rgb_to_json(spec.background)},
           {"blobs", json::array()},
           {"dots", json::array()}};
  for (const auto& b : spec.blobs) {
    doc["blobs"].push_back({{"cx", b.cx}, {"cy", b.cy}, {"rx", b.rx}, {"ry", b.ry},
                            {"color", rgb_to_json(b.color)}});
  }
  for (const auto& d : spec.dots) {
    doc["dots"].push_back({{"cx", d.cx}, {"cy", d.cy}, {"r", d.r},
                           {"color", rgb_to_json(d.color)}});
  }
  return doc.dump(2);
}

SyntheticSpec random_synthetic_spec(uint64_t seed, int64_t width, int64_t height,
                                    int blob_count, int dot_count, int tile_size) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(rng() % static_cast<uint64_t>(hi - lo + 1));
  };
  SyntheticSpec spec;
  spec.width = width;
  spec.height = height;
  spec.tile_size = tile_size;
  spec.seed = seed;

  const int64_t short_side = std::min(width, height);
  const int64_t margin = std::max<int64_t>(width, height) / 16;
  const int64_t r_min = std::max<int64_t>(4, short_side / 16);
  const int64_t r_max = std::max<int64_t>(r_min, short_side / 6);
  for (int attempt = 0; attempt < 2000 && static_cast<int>(spec.blobs.size()) < blob_count;
       ++attempt) {
    Blob b;
    b.rx = uniform(r_min, r_max);
    b.ry = uniform(r_min, r_max);
    if (2 * b.rx + 2 >= width || 2 * b.ry + 2 >= height) continue;
    b.cx = uniform(b.rx + 1, width - b.rx - 2);
    b.cy = uniform(b.ry + 1, height - b.ry - 2);
    b.color = Rgb{static_cast<uint8_t>(uniform(190, 225)), static_cast<uint8_t>(uniform(110, 150)),
                  static_cast<uint8_t>(uniform(170, 215))};
    const bool clear = std::none_of(spec.blobs.begin(), spec.blobs.end(), [&](const Blob& o) {
      return b.cx - b.rx - margin <= o.cx + o.rx && o.cx - o.rx - margin <= b.cx + b.rx &&
             b.cy - b.ry - margin <= o.cy + o.ry && o.cy - o.ry - margin <= b.cy + b.ry;
    });
    if (clear) spec.blobs.push_back(b);
  }
  if (!spec.blobs.empty()) {
    for (int i = 0; i < dot_count; ++i) {
      const Blob& b = spec.blobs[rng() % spec.blobs.size()];
      Dot d;
      d.r = uniform(3, 8);
      if (b.rx <= d.r * 2 || b.ry <= d.r * 2) continue;
      // Stay inside the inscribed axis-aligned box of the ellipse.
      const int64_t hx = (b.rx * 7) / 10 - d.r;
      const int64_t hy = (b.ry * 7) / 10 - d.r;
      if (hx < 0 || hy < 0) continue;
      d.cx = b.cx + uniform(-hx, hx);
      d.cy = b.cy + uniform(-hy, hy);
      spec.dots.push_back(d);
    }
  }
  spec.validate();
  return spec;
}

Raster render_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto& bg = spec.background;
  Raster img(static_cast<int>(spec.width), static_cast<int>(spec.height), {bg.r, bg.g, bg.b, 255});
  for (const auto& b : spec.blobs) {
    for (int64_t y = b.cy - b.ry; y <= b.cy + b.ry; ++y) {
      for (int64_t x = b.cx - b.rx; x <= b.cx + b.rx; ++x) {
        if (!inside_ellipse(x - b.cx, y - b.cy, b.rx, b.ry)) continue;
        const int t = texture_offset(spec.seed, x, y, spec.texture);
        uint8_t* p = img.pixel(static_cast<int>(x), static_cast<int>(y));
        p[0] = clamp_channel(b.color.r + t);
        p[1] = clamp_channel(b.color.g + t);
        p[2] = clamp_channel(b.color.b + t);
        p[3] = 255;
      }
    }
  }
  for (const auto& d : spec.dots) {
    for (int64_t y = d.cy - d.r; y <= d.cy + d.r; ++y) {
      for (int64_t x = d.cx - d.r; x <= d.cx + d.r; ++x) {
        const int64_t dx = x - d.cx;
        const int64_t dy = y - d.cy;
        if (dx * dx + dy * dy > d.r * d.r) continue;
        uint8_t* p = img.pixel(static_cast<int>(x), static_cast<int>(y));
        p[0] = d.color.r;
        p[1] = d.color.g;
        p[2] = d.color.b;
        p[3] = 255;
      }
    }
  }
  return img;
}

SyntheticSpec generate_synthetic_slide(const SyntheticSpec& spec, const fs::path& out_dir) {
  const Raster level0 = render_synthetic(spec);
  write_pyramid(level0, spec.tile_size, out_dir);
  std::ofstream truth(out_dir / "truth.json", std::ios::trunc);
  if (!truth) throw IoError("cannot write truth.json in " + out_dir.string());
  truth << synthetic_spec_to_json(spec) << '\n';
  if (!truth) throw IoError("truth.json write failed in " + out_dir.string());
  return spec;
}

SyntheticSpec load_truth(const fs::path& slide_dir) {
  return load_synthetic_spec(slide_dir / "truth.json");
}

}  // namespace slideanno
