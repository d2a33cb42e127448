#include "slideanno/discovery.hpp"

#include <algorithm>
#include <cmath>

#include "slideanno/error.hpp"

namespace slideanno {

std::vector<int64_t> unlabeled_for(const AnnotationStore& store, int64_t person_id,
                                   int64_t slide_id) {
  if (!store.find_person(person_id)) {
    throw NotFoundError("unknown person " + std::to_string(person_id));
  }
  std::vector<int64_t> out;
  for (const auto& [id, a] : store.annotations()) {
    if (a.slide_id == slide_id && !a.labeled_by(person_id)) out.push_back(id);
  }
  return out;
}

DiscoveryState::DiscoveryState(int64_t person_id, int64_t slide_id, DiscoveryConfig config)
    : person_id_(person_id), slide_id_(slide_id), config_(config), rng_(config.seed) {
  if (config_.viewport_w <= 0 || config_.viewport_h <= 0) {
    throw RangeError("discovery viewport must be positive");
  }
  if (!(config_.jitter_fraction >= 0.0 && config_.jitter_fraction < 0.5)) {
    throw RangeError("jitter fraction must lie in [0, 0.5)");
  }
}

uint64_t DiscoveryState::draw() {
  ++draws_;
  return rng_();
}

uint64_t DiscoveryState::uniform_below(uint64_t n) {
  // Rejection keeps the draw exactly uniform and the stream portable.
  const uint64_t threshold = (0 - n) % n;
  for (;;) {
    const uint64_t r = draw();
    if (r >= threshold) return r % n;
  }
}

int64_t DiscoveryState::uniform_between(int64_t lo, int64_t hi) {
  return lo + static_cast<int64_t>(uniform_below(static_cast<uint64_t>(hi - lo) + 1));
}

std::optional<Rect> DiscoveryState::next_view(const AnnotationStore& store) {
  const SlideRecord* slide = store.find_slide(slide_id_);
  if (!slide) throw NotFoundError("unknown slide " + std::to_string(slide_id_));

  const std::vector<int64_t> unlabeled = unlabeled_for(store, person_id_, slide_id_);
  if (unlabeled.empty()) {
    current_view_.reset();
    return std::nullopt;
  }
  std::vector<int64_t> candidates;
  if (current_view_) {
    for (int64_t id : unlabeled) {
      if (!store.find_annotation(id)->bbox().intersects(*current_view_)) candidates.push_back(id);
    }
  }
  if (candidates.empty()) candidates = unlabeled;

  const int64_t pick = candidates[uniform_below(candidates.size())];
  const Point anchor = store.find_annotation(pick)->anchor();

  const int64_t w = config_.viewport_w, h = config_.viewport_h;
  const auto jx_max = static_cast<int64_t>(std::floor(config_.jitter_fraction * static_cast<double>(w)));
  const auto jy_max = static_cast<int64_t>(std::floor(config_.jitter_fraction * static_cast<double>(h)));
  const int64_t jx = jx_max > 0 ? uniform_between(-jx_max, jx_max) : 0;
  const int64_t jy = jy_max > 0 ? uniform_between(-jy_max, jy_max) : 0;

  const int64_t x = std::clamp(anchor.x + jx - w / 2, int64_t{0}, std::max<int64_t>(0, slide->width - w));
  const int64_t y = std::clamp(anchor.y + jy - h / 2, int64_t{0}, std::max<int64_t>(0, slide->height - h));
  current_view_ = Rect{x, y, w, h};
  return current_view_;
}

bool DiscoveryState::view_complete(const AnnotationStore& store) const {
  if (!current_view_) return true;
  for (const auto& [id, a] : store.annotations()) {
    if (a.slide_id == slide_id_ && !a.labeled_by(person_id_) && a.bbox().intersects(*current_view_)) {
      return false;
    }
  }
  return true;
}

std::size_t DiscoveryState::remaining(const AnnotationStore& store) const {
  return unlabeled_for(store, person_id_, slide_id_).size();
}

}  // namespace slideanno
