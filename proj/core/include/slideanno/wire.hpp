#pragma once

#include <span>
#include <string>
#include <string_view>

#include "slideanno/annostore.hpp"
#include "slideanno/geometry.hpp"

namespace slideanno {

/// "#rrggbb", lowercase.
std::string color_to_hex(const Rgb& c);
Rgb color_from_hex(std::string_view text);

/// JSON array of blinded descriptors as sent to clients. Only own labels
/// carry a class_id; everything else is reduced to black plus the
/// labeled_by_others flag.
std::string descriptors_to_json(std::span<const RenderDescriptor> descriptors);

}  // namespace slideanno
