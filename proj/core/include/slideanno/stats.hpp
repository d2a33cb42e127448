#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slideanno/annostore.hpp"

namespace slideanno {

inline constexpr double kDefaultGapCutoffSeconds = 60.0;

/// Two-rater contingency table. Rows are rater A, columns rater B, both
/// indexed like `class_ids`.
struct ConfusionMatrix {
  std::vector<int64_t> class_ids;
  std::vector<uint64_t> counts;  // row-major K x K

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<int64_t> ids);

  std::size_t size() const { return class_ids.size(); }
  uint64_t& at(std::size_t row, std::size_t col) { return counts[row * size() + col]; }
  uint64_t at(std::size_t row, std::size_t col) const { return counts[row * size() + col]; }
  uint64_t n() const;
  ConfusionMatrix transposed() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct KappaResult {
  double p_o = 0;
  double p_e = 0;
  double kappa = 0;
};

/// Counts every annotation labeled by both raters once, matched by
/// annotation id. `class_ids` empty means all classes in the store, by id.
/// Labels outside `class_ids` are skipped. Throws ValidationError when
/// person_a == person_b and NotFoundError for unknown persons.
ConfusionMatrix confusion_matrix(const AnnotationStore& store, std::optional<int64_t> slide_id,
                                 int64_t person_a, int64_t person_b,
                                 std::vector<int64_t> class_ids = {});

/// Cohen's kappa. Throws UndefinedKappaError when n == 0 or p_e == 1.
KappaResult cohens_kappa(const ConfusionMatrix& m);

enum class AnnotationPass { First, Second };

std::string_view to_string(AnnotationPass pass);

struct TimingStats {
  int64_t person_id = 0;
  AnnotationPass pass = AnnotationPass::First;
  /// Qualifying label events; 0 when fewer than two exist.
  std::size_t n_events = 0;
  /// Inter-event gaps kept after the cutoff.
  std::size_t n_intervals = 0;
  std::optional<double> mean_s;
  std::optional<double> median_s;
  double gap_cutoff_s = kDefaultGapCutoffSeconds;
};

/// Inter-event gaps between one person's label timestamps, per slide. The
/// first pass covers annotations the person created, the second pass the
/// ones created by somebody else. Gaps of zero or above the cutoff are
/// dropped as session breaks.
TimingStats annotation_timing(const AnnotationStore& store, int64_t person_id,
                              double gap_cutoff_s = kDefaultGapCutoffSeconds,
                              AnnotationPass pass = AnnotationPass::First);

/// Plain-text rendering used by the CLI.
std::string format_confusion_table(const AnnotationStore& store, const ConfusionMatrix& m);

/// {"class_ids", "matrix", "n", "p_o", "p_e", "kappa"}; kappa fields are
/// null when undefined.
std::string kappa_report_json(const ConfusionMatrix& m);
std::string timing_report_json(const TimingStats& t);

}  // namespace slideanno
