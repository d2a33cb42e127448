#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "slideanno/annostore.hpp"
#include "slideanno/geometry.hpp"

namespace slideanno {

inline constexpr double kDefaultJitterFraction = 0.25;

struct DiscoveryConfig {
  int64_t viewport_w = 1000;
  int64_t viewport_h = 1000;
  uint64_t seed = 0;
  /// Maximum offset of the view center from the object, per axis, as a
  /// fraction of the viewport size.
  double jitter_fraction = kDefaultJitterFraction;
};

/// Ids of annotations on `slide_id` that `person_id` has not labeled,
/// ascending. Throws NotFoundError for an unknown person.
std::vector<int64_t> unlabeled_for(const AnnotationStore& store, int64_t person_id,
                                   int64_t slide_id);

/// Per-(person, slide) iterator that keeps jumping to random sections still
/// holding objects the person has not classified.
class DiscoveryState {
 public:
  DiscoveryState(int64_t person_id, int64_t slide_id, DiscoveryConfig config = {});

  int64_t person_id() const { return person_id_; }
  int64_t slide_id() const { return slide_id_; }
  const DiscoveryConfig& config() const { return config_; }
  const std::optional<Rect>& current_view() const { return current_view_; }
  /// Number of random draws consumed so far.
  uint64_t stream_position() const { return draws_; }

  /// Picks an unlabeled annotation outside the current view (falling back to
  /// any unlabeled one) and centers a jittered viewport on it, clamped to the
  /// slide. Returns nullopt only once nothing is left to label.
  std::optional<Rect> next_view(const AnnotationStore& store);

  /// True when no annotation meeting the current view lacks this person's
  /// label. Vacuously true without a view.
  bool view_complete(const AnnotationStore& store) const;

  std::size_t remaining(const AnnotationStore& store) const;

 private:
  uint64_t draw();
  uint64_t uniform_below(uint64_t n);
  int64_t uniform_between(int64_t lo, int64_t hi);

  int64_t person_id_;
  int64_t slide_id_;
  DiscoveryConfig config_;
  std::mt19937_64 rng_;
  uint64_t draws_ = 0;
  std::optional<Rect> current_view_;
};

inline std::optional<Rect> next_discovery_view(DiscoveryState& state, const AnnotationStore& store) {
  return state.next_view(store);
}

inline bool view_complete(const DiscoveryState& state, const AnnotationStore& store) {
  return state.view_complete(store);
}

inline std::size_t remaining(const DiscoveryState& state, const AnnotationStore& store) {
  return state.remaining(store);
}

}  // namespace slideanno
