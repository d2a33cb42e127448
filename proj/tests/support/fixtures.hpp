#pragma once

#include <random>
#include <string>
#include <vector>

#include "slideanno/annostore.hpp"

namespace slideanno::testing {

/// Store with persons 1..persons, classes 1..classes and one slide (id 1).
inline AnnotationStore basic_store(int persons = 2, int classes = 4, int64_t width = 10000,
                                   int64_t height = 8000) {
  AnnotationStore s;
  for (int p = 1; p <= persons; ++p) s.add_person({p, "rater" + std::to_string(p)});
  const Rgb palette[] = {{220, 40, 40}, {40, 180, 60}, {50, 90, 220}, {230, 200, 40},
                         {160, 60, 200}, {30, 200, 200}};
  for (int c = 1; c <= classes; ++c) {
    s.add_class({c, "class" + std::to_string(c), palette[(c - 1) % 6]});
  }
  s.add_slide({1, "slide1", "slides/one", width, height});
  return s;
}

/// Adds `count` random annotations (centers and polygons) with random
/// labels from random persons.
inline void add_random_annotations(AnnotationStore& s, int64_t slide_id, int count,
                                   std::mt19937_64& rng, int64_t t0 = 1'700'000'000'000) {
  const SlideRecord& slide = *s.find_slide(slide_id);
  std::vector<int64_t> persons, classes;
  for (const auto& [id, p] : s.persons()) persons.push_back(id);
  for (const auto& [id, c] : s.classes()) classes.push_back(id);
  auto pick = [&](const std::vector<int64_t>& v) { return v[rng() % v.size()]; };
  int64_t t = t0;
  for (int i = 0; i < count; ++i) {
    t += 1 + static_cast<int64_t>(rng() % 20000);
    const int64_t creator = pick(persons);
    int64_t id = 0;
    if (rng() % 4 != 0) {
      id = s.add_center_annotation(slide_id, static_cast<int64_t>(rng() % slide.width),
                                   static_cast<int64_t>(rng() % slide.height), creator,
                                   pick(classes), t);
    } else {
      const int64_t cx = 40 + static_cast<int64_t>(rng() % (slide.width - 80));
      const int64_t cy = 40 + static_cast<int64_t>(rng() % (slide.height - 80));
      std::vector<Point> pts;
      const int n = 3 + static_cast<int>(rng() % 6);
      for (int k = 0; k < n; ++k) {
        pts.push_back({cx + static_cast<int64_t>(rng() % 80) - 40, cy + static_cast<int64_t>(rng() % 80) - 40});
      }
      id = s.add_polygon_annotation(slide_id, pts, creator, pick(classes), t);
    }
    for (int64_t p : persons) {
      if (p != creator && rng() % 2 == 0) s.set_label(id, p, pick(classes), t + 1 + static_cast<int64_t>(rng() % 5000));
    }
  }
}

/// Inter-rater agreement counts reported for the cell-detection study
/// (rows: rater A, columns: rater B).
inline const std::vector<std::vector<uint64_t>> kStudyMatrix = {
    {10318, 395, 327, 2249},
    {147, 30623, 202, 458},
    {27, 546, 18445, 387},
    {257, 2949, 1331, 2420},
};

/// Populates `slide_id` so that the (person_a, person_b) confusion matrix
/// over classes 1..K equals `matrix`. Person A creates every annotation.
inline void add_matrix_annotations(AnnotationStore& s, int64_t slide_id, int64_t person_a,
                                   int64_t person_b,
                                   const std::vector<std::vector<uint64_t>>& matrix,
                                   int64_t t0 = 1'700'000'000'000) {
  const SlideRecord& slide = *s.find_slide(slide_id);
  int64_t t = t0, k = 0;
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    for (std::size_t j = 0; j < matrix[i].size(); ++j) {
      for (uint64_t c = 0; c < matrix[i][j]; ++c, ++k) {
        const int64_t id = s.add_center_annotation(slide_id, (k * 7919) % slide.width,
                                                   (k * 104729) % slide.height, person_a,
                                                   static_cast<int64_t>(i) + 1, t++);
        s.set_label(id, person_b, static_cast<int64_t>(j) + 1, t++);
      }
    }
  }
}

}  // namespace slideanno::testing
