#include "slideanno/annostore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "slideanno/error.hpp"
#include "slideanno/wire.hpp"

namespace slideanno {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(AnnotationKind kind) {
  return kind == AnnotationKind::Center ? "center" : "polygon";
}

AnnotationKind parse_annotation_kind(std::string_view text) {
  if (text == "center") return AnnotationKind::Center;
  if (text == "polygon") return AnnotationKind::Polygon;
  throw ValidationError("unknown annotation kind '" + std::string(text) + "'");
}

BBox Annotation::bbox() const {
  if (coordinates.empty()) return {};
  BBox b{coordinates[0].x, coordinates[0].y, coordinates[0].x, coordinates[0].y};
  for (const auto& c : coordinates) {
    b.min_x = std::min(b.min_x, c.x);
    b.min_y = std::min(b.min_y, c.y);
    b.max_x = std::max(b.max_x, c.x);
    b.max_y = std::max(b.max_y, c.y);
  }
  return b;
}

Point Annotation::anchor() const {
  if (kind == AnnotationKind::Center && !coordinates.empty()) {
    return {coordinates[0].x, coordinates[0].y};
  }
  const BBox b = bbox();
  return {floor_div(b.min_x + b.max_x, 2), floor_div(b.min_y + b.max_y, 2)};
}

const Label* Annotation::label_by(int64_t person_id) const {
  auto it = std::lower_bound(labels.begin(), labels.end(), person_id,
                             [](const Label& l, int64_t p) { return l.person_id < p; });
  return (it != labels.end() && it->person_id == person_id) ? &*it : nullptr;
}

namespace {

void upsert_label(Annotation& a, const Label& label) {
  auto it = std::lower_bound(a.labels.begin(), a.labels.end(), label.person_id,
                             [](const Label& l, int64_t p) { return l.person_id < p; });
  if (it != a.labels.end() && it->person_id == label.person_id) {
    *it = label;
  } else {
    a.labels.insert(it, label);
  }
}

// Even-odd crossing test against the implicitly closed ring.
bool polygon_contains(const std::vector<Coordinate>& ring, double px, double py) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const double xi = static_cast<double>(ring[i].x), yi = static_cast<double>(ring[i].y);
    const double xj = static_cast<double>(ring[j].x), yj = static_cast<double>(ring[j].y);
    if ((yi > py) != (yj > py)) {
      const double x_cross = xi + (py - yi) * (xj - xi) / (yj - yi);
      if (px < x_cross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

void AnnotationStore::add_person(Person person) {
  if (person.name.empty()) throw ValidationError("person name must not be empty");
  if (persons_.count(person.id)) {
    throw ValidationError("duplicate person id " + std::to_string(person.id));
  }
  persons_.emplace(person.id, std::move(person));
}

void AnnotationStore::add_class(ClassDef cls) {
  if (cls.color == kUnknownColor) {
    throw ValidationError("class color (0,0,0) is reserved for unknown classes");
  }
  if (classes_.count(cls.id)) throw ValidationError("duplicate class id " + std::to_string(cls.id));
  classes_.emplace(cls.id, std::move(cls));
}

void AnnotationStore::add_slide(SlideRecord slide) {
  if (slide.width <= 0 || slide.height <= 0) {
    throw ValidationError("slide extent must be positive");
  }
  if (slides_.count(slide.id)) throw ValidationError("duplicate slide id " + std::to_string(slide.id));
  slides_.emplace(slide.id, std::move(slide));
}

const Person* AnnotationStore::find_person(int64_t id) const {
  auto it = persons_.find(id);
  return it == persons_.end() ? nullptr : &it->second;
}

const ClassDef* AnnotationStore::find_class(int64_t id) const {
  auto it = classes_.find(id);
  return it == classes_.end() ? nullptr : &it->second;
}

const SlideRecord* AnnotationStore::find_slide(int64_t id) const {
  auto it = slides_.find(id);
  return it == slides_.end() ? nullptr : &it->second;
}

const Annotation* AnnotationStore::find_annotation(int64_t id) const {
  auto it = annotations_.find(id);
  return it == annotations_.end() ? nullptr : &it->second;
}

const SlideRecord& AnnotationStore::require_slide(int64_t id) const {
  const SlideRecord* s = find_slide(id);
  if (!s) throw NotFoundError("unknown slide " + std::to_string(id));
  return *s;
}

void AnnotationStore::require_person(int64_t id) const {
  if (!find_person(id)) throw NotFoundError("unknown person " + std::to_string(id));
}

void AnnotationStore::require_class(int64_t id) const {
  if (!find_class(id)) throw NotFoundError("unknown class " + std::to_string(id));
}

void AnnotationStore::check_in_extent(const SlideRecord& slide, int64_t x, int64_t y) const {
  if (x < 0 || y < 0 || x >= slide.width || y >= slide.height) {
    throw RangeError("point (" + std::to_string(x) + "," + std::to_string(y) +
                     ") outside slide " + std::to_string(slide.id));
  }
}

void AnnotationStore::validate(const Annotation& a) const {
  const SlideRecord& slide = require_slide(a.slide_id);
  const std::size_t n = a.coordinates.size();
  if (a.kind == AnnotationKind::Center && n != 1) {
    throw ValidationError("center annotation needs exactly one coordinate");
  }
  if (a.kind == AnnotationKind::Polygon && n < 3) {
    throw ValidationError("polygon annotation needs at least three coordinates");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (a.coordinates[i].order != static_cast<int64_t>(i)) {
      throw ValidationError("coordinate order must run 0..n-1");
    }
    check_in_extent(slide, a.coordinates[i].x, a.coordinates[i].y);
  }
  if (a.creator_id != 0) require_person(a.creator_id);
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    require_person(a.labels[i].person_id);
    require_class(a.labels[i].class_id);
    if (i > 0 && a.labels[i - 1].person_id >= a.labels[i].person_id) {
      throw ValidationError("at most one label per person and annotation");
    }
  }
}

int64_t AnnotationStore::add_center_annotation(int64_t slide_id, int64_t x, int64_t y,
                                               int64_t person_id, int64_t class_id,
                                               int64_t timestamp_ms) {
  const Point p{x, y};
  Annotation a;
  a.slide_id = slide_id;
  a.kind = AnnotationKind::Center;
  a.creator_id = person_id;
  a.coordinates.push_back({p.x, p.y, 0});
  a.labels.push_back({person_id, class_id, timestamp_ms});
  validate(a);
  a.id = next_annotation_id_++;
  const int64_t id = a.id;
  annotations_.emplace(id, std::move(a));
  return id;
}

int64_t AnnotationStore::add_polygon_annotation(int64_t slide_id, std::span<const Point> points,
                                                int64_t person_id, int64_t class_id,
                                                int64_t timestamp_ms) {
  if (points.size() < 3) throw ValidationError("polygon annotation needs at least three points");
  Annotation a;
  a.slide_id = slide_id;
  a.kind = AnnotationKind::Polygon;
  a.creator_id = person_id;
  for (std::size_t i = 0; i < points.size(); ++i) {
    a.coordinates.push_back({points[i].x, points[i].y, static_cast<int64_t>(i)});
  }
  a.labels.push_back({person_id, class_id, timestamp_ms});
  validate(a);
  a.id = next_annotation_id_++;
  const int64_t id = a.id;
  annotations_.emplace(id, std::move(a));
  return id;
}

void AnnotationStore::set_label(int64_t annotation_id, int64_t person_id, int64_t class_id,
                                int64_t timestamp_ms) {
  auto it = annotations_.find(annotation_id);
  if (it == annotations_.end()) {
    throw NotFoundError("unknown annotation " + std::to_string(annotation_id));
  }
  require_person(person_id);
  require_class(class_id);
  upsert_label(it->second, Label{person_id, class_id, timestamp_ms});
}

std::vector<Annotation> AnnotationStore::query_viewport(int64_t slide_id, const Rect& rect) const {
  std::vector<Annotation> out;
  if (rect.empty()) return out;
  for (const auto& [id, a] : annotations_) {
    if (a.slide_id == slide_id && a.bbox().intersects(rect)) out.push_back(a);
  }
  return out;
}

std::vector<Annotation> AnnotationStore::annotations_on(int64_t slide_id) const {
  std::vector<Annotation> out;
  for (const auto& [id, a] : annotations_) {
    if (a.slide_id == slide_id) out.push_back(a);
  }
  return out;
}

std::optional<int64_t> AnnotationStore::hit_test(int64_t slide_id, int64_t x, int64_t y,
                                                 double radius) const {
  if (!(radius > 0)) throw RangeError("hit radius must be positive");
  std::optional<int64_t> best;
  double best_dist = std::numeric_limits<double>::infinity();
  const double px = static_cast<double>(x), py = static_cast<double>(y);
  for (const auto& [id, a] : annotations_) {
    if (a.slide_id != slide_id) continue;
    double dist = 0;
    if (a.kind == AnnotationKind::Center) {
      const double dx = static_cast<double>(a.coordinates[0].x) - px;
      const double dy = static_cast<double>(a.coordinates[0].y) - py;
      dist = std::sqrt(dx * dx + dy * dy);
      if (dist > radius) continue;
    } else if (!polygon_contains(a.coordinates, px, py)) {
      continue;
    }
    // Ascending id iteration makes strict < pick the smallest id on ties.
    if (dist < best_dist) {
      best_dist = dist;
      best = id;
    }
  }
  return best;
}

void AnnotationStore::insert_annotation(Annotation annotation) {
  std::sort(annotation.coordinates.begin(), annotation.coordinates.end(),
            [](const Coordinate& l, const Coordinate& r) { return l.order < r.order; });
  std::sort(annotation.labels.begin(), annotation.labels.end(),
            [](const Label& l, const Label& r) { return l.person_id < r.person_id; });
  if (annotation.id <= 0) throw ValidationError("annotation id must be positive");
  if (annotations_.count(annotation.id)) {
    throw ValidationError("duplicate annotation id " + std::to_string(annotation.id));
  }
  validate(annotation);
  next_annotation_id_ = std::max(next_annotation_id_, annotation.id + 1);
  const int64_t id = annotation.id;
  annotations_.emplace_hint(annotations_.end(), id, std::move(annotation));
}

void AnnotationStore::merge(const AnnotationStore& other) {
  for (const auto& [id, p] : other.persons_) {
    if (!persons_.count(id)) persons_.emplace(id, p);
  }
  for (const auto& [id, c] : other.classes_) {
    if (!classes_.count(id)) classes_.emplace(id, c);
  }
  for (const auto& [id, s] : other.slides_) {
    if (!slides_.count(id)) slides_.emplace(id, s);
  }
  for (const auto& [id, incoming] : other.annotations_) {
    auto it = annotations_.find(id);
    if (it == annotations_.end()) {
      insert_annotation(incoming);
      continue;
    }
    for (const Label& label : incoming.labels) {
      const Label* mine = it->second.label_by(label.person_id);
      if (!mine || label.timestamp_ms > mine->timestamp_ms) upsert_label(it->second, label);
    }
  }
}

std::vector<RenderDescriptor> blinded_render(const AnnotationStore& store,
                                             std::span<const Annotation> annotations,
                                             int64_t viewer) {
  std::vector<RenderDescriptor> out;
  out.reserve(annotations.size());
  for (const Annotation& a : annotations) {
    RenderDescriptor d;
    d.annotation_id = a.id;
    d.kind = a.kind;
    d.geometry.reserve(a.coordinates.size());
    for (const auto& c : a.coordinates) d.geometry.push_back({c.x, c.y});
    for (const Label& l : a.labels) {
      if (l.person_id != viewer) d.labeled_by_others = true;
    }
    if (const Label* own = a.label_by(viewer)) {
      const ClassDef* cls = store.find_class(own->class_id);
      d.blinded = false;
      d.class_id = own->class_id;
      d.display_color = cls ? cls->color : kUnknownColor;
    }
    out.push_back(std::move(d));
  }
  return out;
}

// ---- persistence ----------------------------------------------------------

std::string store_to_json(const AnnotationStore& store, int indent) {
  json doc{{"version", kDatabaseVersion},
           {"persons", json::array()},
           {"classes", json::array()},
           {"slides", json::array()},
           {"annotations", json::array()}};
  for (const auto& [id, p] : store.persons()) {
    doc["persons"].push_back({{"id", p.id}, {"name", p.name}});
  }
  for (const auto& [id, c] : store.classes()) {
    doc["classes"].push_back({{"id", c.id}, {"name", c.name}, {"color", color_to_hex(c.color)}});
  }
  for (const auto& [id, s] : store.slides()) {
    doc["slides"].push_back({{"id", s.id},
                             {"name", s.name},
                             {"container_path", s.container_path},
                             {"width", s.width},
                             {"height", s.height}});
  }
  auto& anns = doc["annotations"];
  for (const auto& [id, a] : store.annotations()) {
    json coords = json::array();
    for (const auto& c : a.coordinates) coords.push_back({{"x", c.x}, {"y", c.y}, {"order", c.order}});
    json labels = json::array();
    for (const auto& l : a.labels) {
      labels.push_back({{"person_id", l.person_id}, {"class_id", l.class_id}, {"ts_ms", l.timestamp_ms}});
    }
    anns.push_back({{"id", a.id},
                    {"slide_id", a.slide_id},
                    {"kind", to_string(a.kind)},
                    {"creator_id", a.creator_id},
                    {"coordinates", std::move(coords)},
                    {"labels", std::move(labels)}});
  }
  return doc.dump(indent);
}

namespace {

/// Member `key` by reference, or an empty array when absent.
const json& array_at(const json& j, const char* key) {
  static const json empty = json::array();
  const auto it = j.find(key);
  return it == j.end() ? empty : *it;
}

}  // namespace

AnnotationStore store_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("database is not valid JSON: ") + e.what());
  }
  AnnotationStore store;
  try {
    const int version = doc.at("version").get<int>();
    if (version != kDatabaseVersion) {
      throw VersionError("unsupported database version " + std::to_string(version) +
                         " (expected " + std::to_string(kDatabaseVersion) + ")");
    }
    for (const auto& p : array_at(doc, "persons")) {
      store.add_person({p.at("id").get<int64_t>(), p.at("name").get<std::string>()});
    }
    for (const auto& c : array_at(doc, "classes")) {
      store.add_class({c.at("id").get<int64_t>(), c.at("name").get<std::string>(),
                       color_from_hex(c.at("color").get<std::string>())});
    }
    for (const auto& s : array_at(doc, "slides")) {
      store.add_slide({s.at("id").get<int64_t>(), s.value("name", std::string{}),
                       s.value("container_path", std::string{}), s.at("width").get<int64_t>(),
                       s.at("height").get<int64_t>()});
    }
    for (const auto& j : array_at(doc, "annotations")) {
      Annotation a;
      a.id = j.at("id").get<int64_t>();
      a.slide_id = j.at("slide_id").get<int64_t>();
      a.kind = parse_annotation_kind(j.at("kind").get<std::string>());
      for (const auto& c : j.at("coordinates")) {
        a.coordinates.push_back(
            {c.at("x").get<int64_t>(), c.at("y").get<int64_t>(), c.at("order").get<int64_t>()});
      }
      for (const auto& l : array_at(j, "labels")) {
        a.labels.push_back({l.at("person_id").get<int64_t>(), l.at("class_id").get<int64_t>(),
                            l.at("ts_ms").get<int64_t>()});
      }
      if (j.contains("creator_id")) {
        a.creator_id = j["creator_id"].get<int64_t>();
      } else if (!a.labels.empty()) {
        // Older exchange files: the earliest label is the creating gesture.
        const auto first = std::min_element(
            a.labels.begin(), a.labels.end(), [](const Label& l, const Label& r) {
              return l.timestamp_ms != r.timestamp_ms ? l.timestamp_ms < r.timestamp_ms
                                                      : l.person_id < r.person_id;
            });
        a.creator_id = first->person_id;
      }
      store.insert_annotation(std::move(a));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed database: ") + e.what());
  }
  return store;
}

void save_store(const AnnotationStore& store, const fs::path& path) {
  const std::string text = store_to_json(store);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    f.flush();
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot replace " + path.string());
  }
}

AnnotationStore load_store(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open database " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return store_from_json(ss.str());
}

}  // namespace slideanno
