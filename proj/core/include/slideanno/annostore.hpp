#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slideanno/geometry.hpp"

namespace slideanno {

inline constexpr int kDatabaseVersion = 1;
inline constexpr double kDefaultHitRadius = 25.0;

enum class AnnotationKind { Center, Polygon };

std::string_view to_string(AnnotationKind kind);
AnnotationKind parse_annotation_kind(std::string_view text);

struct Person {
  int64_t id = 0;
  std::string name;

  friend bool operator==(const Person&, const Person&) = default;
};

/// Class colors may repeat but never equal kUnknownColor, which is reserved
/// for annotations the viewer has not labeled.
struct ClassDef {
  int64_t id = 0;
  std::string name;
  Rgb color;

  friend bool operator==(const ClassDef&, const ClassDef&) = default;
};

struct SlideRecord {
  int64_t id = 0;
  std::string name;
  std::string container_path;
  int64_t width = 0;
  int64_t height = 0;

  friend bool operator==(const SlideRecord&, const SlideRecord&) = default;
};

struct Coordinate {
  int64_t x = 0;
  int64_t y = 0;
  int64_t order = 0;

  friend bool operator==(const Coordinate&, const Coordinate&) = default;
};

struct Label {
  int64_t person_id = 0;
  int64_t class_id = 0;
  int64_t timestamp_ms = 0;

  friend bool operator==(const Label&, const Label&) = default;
};

struct Annotation {
  int64_t id = 0;
  int64_t slide_id = 0;
  AnnotationKind kind = AnnotationKind::Center;
  /// Person whose gesture created the annotation.
  int64_t creator_id = 0;
  std::vector<Coordinate> coordinates;  // sorted by order
  std::vector<Label> labels;            // at most one per person, sorted by person

  BBox bbox() const;
  /// Center coordinate, or the bounding-box center of a polygon.
  Point anchor() const;
  const Label* label_by(int64_t person_id) const;
  bool labeled_by(int64_t person_id) const { return label_by(person_id) != nullptr; }

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// What a given viewer is allowed to see of one annotation.
struct RenderDescriptor {
  int64_t annotation_id = 0;
  AnnotationKind kind = AnnotationKind::Center;
  std::vector<Point> geometry;
  Rgb display_color = kUnknownColor;
  bool blinded = true;
  /// Present only for the viewer's own label.
  std::optional<int64_t> class_id;
  bool labeled_by_others = false;

  friend bool operator==(const RenderDescriptor&, const RenderDescriptor&) = default;
};

/// In-memory annotation database: persons, classes, slides and annotations
/// with per-person labels. Not synchronized; see SharedStore.
class AnnotationStore {
 public:
  void add_person(Person person);
  void add_class(ClassDef cls);
  void add_slide(SlideRecord slide);

  const Person* find_person(int64_t id) const;
  const ClassDef* find_class(int64_t id) const;
  const SlideRecord* find_slide(int64_t id) const;
  const Annotation* find_annotation(int64_t id) const;

  const std::map<int64_t, Person>& persons() const { return persons_; }
  const std::map<int64_t, ClassDef>& classes() const { return classes_; }
  const std::map<int64_t, SlideRecord>& slides() const { return slides_; }
  const std::map<int64_t, Annotation>& annotations() const { return annotations_; }

  /// Creates a single-point annotation together with its creator's label.
  int64_t add_center_annotation(int64_t slide_id, int64_t x, int64_t y, int64_t person_id,
                                int64_t class_id, int64_t timestamp_ms);

  /// Creates a polygon (implicitly closed, self-intersection allowed) with
  /// the creator's label. Needs at least three points.
  int64_t add_polygon_annotation(int64_t slide_id, std::span<const Point> points,
                                 int64_t person_id, int64_t class_id, int64_t timestamp_ms);

  /// Inserts or replaces `person_id`'s label on the annotation.
  void set_label(int64_t annotation_id, int64_t person_id, int64_t class_id,
                 int64_t timestamp_ms);

  /// Annotations on the slide whose bounding box meets `rect`, by ascending id.
  std::vector<Annotation> query_viewport(int64_t slide_id, const Rect& rect) const;

  std::vector<Annotation> annotations_on(int64_t slide_id) const;

  /// Closest center within `radius` or polygon containing the point
  /// (even-odd rule, distance 0). Ties go to the smaller id.
  std::optional<int64_t> hit_test(int64_t slide_id, int64_t x, int64_t y,
                                  double radius = kDefaultHitRadius) const;

  /// Unions `other` into this store. Entities are matched by id; for labels on
  /// the same (annotation, person) the newer timestamp wins.
  void merge(const AnnotationStore& other);

  /// Inserts a fully formed annotation, as read from a file. Validates it.
  void insert_annotation(Annotation annotation);

  bool empty() const {
    return persons_.empty() && classes_.empty() && slides_.empty() && annotations_.empty();
  }

  friend bool operator==(const AnnotationStore& a, const AnnotationStore& b) {
    return a.persons_ == b.persons_ && a.classes_ == b.classes_ && a.slides_ == b.slides_ &&
           a.annotations_ == b.annotations_;
  }

 private:
  const SlideRecord& require_slide(int64_t id) const;
  void require_person(int64_t id) const;
  void require_class(int64_t id) const;
  void check_in_extent(const SlideRecord& slide, int64_t x, int64_t y) const;
  void validate(const Annotation& a) const;

  std::map<int64_t, Person> persons_;
  std::map<int64_t, ClassDef> classes_;
  std::map<int64_t, SlideRecord> slides_;
  std::map<int64_t, Annotation> annotations_;
  int64_t next_annotation_id_ = 1;
};

std::vector<RenderDescriptor> blinded_render(const AnnotationStore& store,
                                             std::span<const Annotation> annotations,
                                             int64_t viewer);

std::string store_to_json(const AnnotationStore& store, int indent = -1);
AnnotationStore store_from_json(std::string_view text);

/// Writes to a sibling temp file and renames it over `path`.
void save_store(const AnnotationStore& store, const std::filesystem::path& path);
AnnotationStore load_store(const std::filesystem::path& path);

/// Single-writer / multi-reader wrapper. Readers run under a shared lock and
/// see a consistent state for the duration of the callback.
class SharedStore {
 public:
  SharedStore() = default;
  explicit SharedStore(AnnotationStore store) : store_(std::move(store)) {}

  template <class F>
  decltype(auto) read(F&& f) const {
    std::shared_lock lock(mu_);
    return f(static_cast<const AnnotationStore&>(store_));
  }

  template <class F>
  decltype(auto) write(F&& f) {
    std::unique_lock lock(mu_);
    return f(store_);
  }

  AnnotationStore snapshot() const {
    std::shared_lock lock(mu_);
    return store_;
  }

 private:
  mutable std::shared_mutex mu_;
  AnnotationStore store_;
};

}  // namespace slideanno
