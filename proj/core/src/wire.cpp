#include "slideanno/wire.hpp"

#include <cstdio>

#include "json.hpp"
#include "slideanno/error.hpp"

namespace slideanno {

using nlohmann::json;

std::string color_to_hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

Rgb color_from_hex(std::string_view text) {
  if (text.size() != 7 || text[0] != '#') throw ValidationError("color must look like #rrggbb");
  auto nibble = [](char ch) -> int {
    if (ch >= '0' && ch <= '9') return ch - '0';
    if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
    if (ch >= 'A' && ch <= 'F') return ch - 'A' + 10;
    throw ValidationError("bad hex digit in color");
  };
  auto byte = [&](std::size_t i) {
    return static_cast<uint8_t>(nibble(text[i]) * 16 + nibble(text[i + 1]));
  };
  return Rgb{byte(1), byte(3), byte(5)};
}

std::string descriptors_to_json(std::span<const RenderDescriptor> descriptors) {
  json arr = json::array();
  for (const auto& d : descriptors) {
    json coords = json::array();
    for (const auto& p : d.geometry) coords.push_back({p.x, p.y});
    json item{{"id", d.annotation_id},
              {"kind", to_string(d.kind)},
              {"coordinates", std::move(coords)},
              {"color", color_to_hex(d.blinded ? kUnknownColor : d.display_color)},
              {"blinded", d.blinded},
              {"labeled_by_others", d.labeled_by_others}};
    if (!d.blinded && d.class_id) item["class_id"] = *d.class_id;
    arr.push_back(std::move(item));
  }
  return arr.dump();
}

}  // namespace slideanno
