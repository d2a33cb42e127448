#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "slideanno/error.hpp"
#include "slideanno/stats.hpp"
#include "json.hpp"

using namespace slideanno;
using slideanno::testing::basic_store;

namespace {

constexpr int64_t kT0 = 1'700'000'000'000;

ConfusionMatrix matrix_of(const std::vector<std::vector<uint64_t>>& rows) {
  std::vector<int64_t> ids(rows.size());
  std::iota(ids.begin(), ids.end(), 1);
  ConfusionMatrix m(ids);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) m.at(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace

TEST_CASE("confusion_matrix") {
  SUBCASE("identical labels land on the diagonal") {
    AnnotationStore s = basic_store(2);
    for (int i = 0; i < 12; ++i) {
      const int64_t cls = 1 + i % 4;
      const int64_t id = s.add_center_annotation(1, 10 * i, 10, 1, cls, kT0 + i);
      s.set_label(id, 2, cls, kT0 + 100 + i);
    }
    const ConfusionMatrix m = confusion_matrix(s, 1, 1, 2);
    CHECK(m.n() == 12);
    for (std::size_t i = 0; i < 4; ++i) CHECK(m.at(i, i) == 3);
  }
  SUBCASE("annotations labeled by one rater only are excluded") {
    AnnotationStore s = basic_store(3);
    const int64_t a = s.add_center_annotation(1, 1, 1, 1, 1, kT0);
    s.add_center_annotation(1, 2, 2, 1, 2, kT0 + 1);
    s.add_center_annotation(1, 3, 3, 2, 2, kT0 + 2);
    s.set_label(a, 2, 3, kT0 + 3);
    s.set_label(a, 3, 3, kT0 + 3);
    const ConfusionMatrix m = confusion_matrix(s, std::nullopt, 1, 2);
    CHECK(m.n() == 1);
    CHECK(m.at(0, 2) == 1);
  }
  SUBCASE("study fixture reproduces the published table") {
    AnnotationStore s = basic_store(2);
    testing::add_matrix_annotations(s, 1, 1, 2, testing::kStudyMatrix);
    const ConfusionMatrix m = confusion_matrix(s, 1, 1, 2);
    CHECK(m == matrix_of(testing::kStudyMatrix));
    CHECK(m.n() == 71081);
    CHECK(confusion_matrix(s, 1, 2, 1) == m.transposed());
  }
  SUBCASE("class subset and slide filter") {
    AnnotationStore s = basic_store(2);
    s.add_slide({2, "slide2", "x", 500, 500});
    const int64_t a = s.add_center_annotation(1, 1, 1, 1, 1, kT0);
    const int64_t b = s.add_center_annotation(2, 1, 1, 1, 2, kT0);
    s.set_label(a, 2, 1, kT0 + 1);
    s.set_label(b, 2, 2, kT0 + 1);
    CHECK(confusion_matrix(s, 2, 1, 2).n() == 1);
    CHECK(confusion_matrix(s, std::nullopt, 1, 2).n() == 2);
    CHECK(confusion_matrix(s, std::nullopt, 1, 2, {2, 3}).n() == 1);
  }
  SUBCASE("errors") {
    AnnotationStore s = basic_store(2);
    CHECK_THROWS_AS(confusion_matrix(s, 1, 1, 1), ValidationError);
    CHECK_THROWS_AS(confusion_matrix(s, 1, 1, 9), NotFoundError);
  }
}

TEST_CASE("cohens_kappa") {
  SUBCASE("study table") {
    // numpy: n=71081, trace=61806, p_o=0.8695150602833387, p_e=0.3285430304489097
    const KappaResult k = cohens_kappa(matrix_of(testing::kStudyMatrix));
    CHECK(k.p_o == doctest::Approx(0.8695150602833387).epsilon(1e-12));
    CHECK(k.p_e == doctest::Approx(0.3285430304489097).epsilon(1e-12));
    CHECK(k.kappa == doctest::Approx(0.8056689473282279).epsilon(1e-12));
    CHECK(std::abs(k.kappa - 0.8057) <= 0.0005);
  }
  SUBCASE("perfect agreement") {
    CHECK(cohens_kappa(matrix_of({{5, 0, 0}, {0, 7, 0}, {0, 0, 2}})).kappa == doctest::Approx(1.0));
  }
  SUBCASE("chance agreement") {
    CHECK(cohens_kappa(matrix_of({{1, 1}, {1, 1}})).kappa == doctest::Approx(0.0));
  }
  SUBCASE("undefined cases") {
    CHECK_THROWS_AS(cohens_kappa(matrix_of({{0, 0}, {0, 0}})), UndefinedKappaError);
    CHECK_THROWS_AS(cohens_kappa(matrix_of({{9, 0}, {0, 0}})), UndefinedKappaError);
    const auto doc = nlohmann::json::parse(kappa_report_json(matrix_of({{0, 0}, {0, 0}})));
    CHECK(doc["kappa"].is_null());
    CHECK(doc["n"] == 0);
  }
  SUBCASE("matches the textbook formula and is symmetric on random tables") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t k = 2 + rng() % 5;
      std::vector<std::vector<uint64_t>> rows(k, std::vector<uint64_t>(k));
      for (auto& r : rows) {
        for (auto& c : r) c = rng() % 50;
      }
      rows[0][0] += 1;
      rows[1][1] += 1;
      const ConfusionMatrix m = matrix_of(rows);
      const KappaResult got = cohens_kappa(m);
      const auto want = oracle::kappa(rows);
      CHECK(got.kappa == doctest::Approx(static_cast<double>(want.kappa)).epsilon(1e-9));
      CHECK(got.kappa <= 1.0 + 1e-12);
      CHECK(cohens_kappa(m.transposed()).kappa == doctest::Approx(got.kappa).epsilon(1e-12));

      std::vector<std::size_t> perm(k);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<std::vector<uint64_t>> permuted(k, std::vector<uint64_t>(k));
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) permuted[i][j] = rows[perm[i]][perm[j]];
      }
      CHECK(cohens_kappa(matrix_of(permuted)).kappa == doctest::Approx(got.kappa).epsilon(1e-12));
    }
  }
}

TEST_CASE("annotation_timing") {
  SUBCASE("three events five and seven seconds apart") {
    AnnotationStore s = basic_store(2);
    for (int64_t dt : {0, 5000, 12000}) s.add_center_annotation(1, 5, 5, 1, 1, kT0 + dt);
    const TimingStats t = annotation_timing(s, 1);
    CHECK(t.n_events == 3);
    CHECK(t.n_intervals == 2);
    CHECK(*t.mean_s == doctest::Approx(6.0));
    CHECK(*t.median_s == doctest::Approx(6.0));
  }
  SUBCASE("a gap above the cutoff is a session break") {
    AnnotationStore s = basic_store(2);
    for (int64_t dt : {0, 5000, 100000, 105000}) s.add_center_annotation(1, 5, 5, 1, 1, kT0 + dt);
    const TimingStats t = annotation_timing(s, 1, 60.0);
    CHECK(t.n_intervals == 2);
    CHECK(*t.mean_s == doctest::Approx(5.0));
  }
  SUBCASE("gaps never span slides") {
    AnnotationStore s = basic_store(2);
    s.add_slide({2, "two", "x", 100, 100});
    s.add_center_annotation(1, 5, 5, 1, 1, kT0);
    s.add_center_annotation(2, 5, 5, 1, 1, kT0 + 2000);
    const TimingStats t = annotation_timing(s, 1);
    CHECK(t.n_events == 2);
    CHECK(t.n_intervals == 0);
    CHECK_FALSE(t.mean_s.has_value());
  }
  SUBCASE("fewer than two events") {
    AnnotationStore s = basic_store(2);
    s.add_center_annotation(1, 5, 5, 1, 1, kT0);
    const TimingStats t = annotation_timing(s, 1);
    CHECK(t.n_events == 0);
    CHECK_FALSE(t.mean_s.has_value());
    CHECK(nlohmann::json::parse(timing_report_json(t))["mean_s"].is_null());
  }
  SUBCASE("first and second pass are separate") {
    AnnotationStore s = basic_store(2);
    const int64_t a = s.add_center_annotation(1, 5, 5, 2, 1, kT0);
    const int64_t b = s.add_center_annotation(1, 6, 6, 2, 1, kT0 + 1000);
    s.add_center_annotation(1, 7, 7, 1, 1, kT0 + 1500);
    s.set_label(a, 1, 2, kT0 + 10000);
    s.set_label(b, 1, 2, kT0 + 13000);
    CHECK(annotation_timing(s, 1, 60, AnnotationPass::First).n_events == 0);
    const TimingStats second = annotation_timing(s, 1, 60, AnnotationPass::Second);
    CHECK(second.n_events == 2);
    CHECK(*second.mean_s == doctest::Approx(3.0));
  }
  SUBCASE("random exponential gaps against a direct recomputation") {
    std::mt19937_64 rng(8);
    std::exponential_distribution<double> gap(1.0 / 12.0);
    AnnotationStore s = basic_store(2);
    std::vector<double> kept;
    int64_t t = kT0;
    s.add_center_annotation(1, 1, 1, 1, 1, t);
    for (int i = 0; i < 2000; ++i) {
      const int64_t d = 1 + static_cast<int64_t>(gap(rng) * 1000.0);
      t += d;
      s.add_center_annotation(1, 1 + i % 9000, 1, 1, 1, t);
      if (d <= 60000) kept.push_back(static_cast<double>(d) / 1000.0);
    }
    const TimingStats st = annotation_timing(s, 1);
    CHECK(st.n_events == 2001);
    CHECK(st.n_intervals == kept.size());
    const double mean = std::accumulate(kept.begin(), kept.end(), 0.0) / static_cast<double>(kept.size());
    CHECK(*st.mean_s == doctest::Approx(mean).epsilon(1e-12));
    CHECK(*st.mean_s == doctest::Approx(12.0).epsilon(0.1));
  }
  CHECK_THROWS_AS(annotation_timing(basic_store(1), 1, 0.0), RangeError);
  CHECK_THROWS_AS(annotation_timing(basic_store(1), 5), NotFoundError);
}

TEST_CASE("confusion table text lists class names") {
  AnnotationStore s = basic_store(2);
  testing::add_matrix_annotations(s, 1, 1, 2, {{2, 1}, {0, 3}});
  const std::string text = format_confusion_table(s, confusion_matrix(s, 1, 1, 2, {1, 2}));
  CHECK(text.find("class1") != std::string::npos);
  CHECK(text.find("class2") != std::string::npos);
}
