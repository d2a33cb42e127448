#include "slideanno/stats.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "slideanno/error.hpp"

namespace slideanno {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(std::vector<int64_t> ids)
    : class_ids(std::move(ids)), counts(class_ids.size() * class_ids.size(), 0) {}

uint64_t ConfusionMatrix::n() const {
  return std::accumulate(counts.begin(), counts.end(), uint64_t{0});
}

ConfusionMatrix ConfusionMatrix::transposed() const {
  ConfusionMatrix t(class_ids);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = 0; j < size(); ++j) t.at(j, i) = at(i, j);
  }
  return t;
}

ConfusionMatrix confusion_matrix(const AnnotationStore& store, std::optional<int64_t> slide_id,
                                 int64_t person_a, int64_t person_b,
                                 std::vector<int64_t> class_ids) {
  if (person_a == person_b) throw ValidationError("kappa needs two distinct raters");
  for (int64_t p : {person_a, person_b}) {
    if (!store.find_person(p)) throw NotFoundError("unknown person " + std::to_string(p));
  }
  if (slide_id && !store.find_slide(*slide_id)) {
    throw NotFoundError("unknown slide " + std::to_string(*slide_id));
  }
  if (class_ids.empty()) {
    for (const auto& [id, c] : store.classes()) class_ids.push_back(id);
  }
  std::map<int64_t, std::size_t> index;
  for (std::size_t i = 0; i < class_ids.size(); ++i) index.emplace(class_ids[i], i);

  ConfusionMatrix m(std::move(class_ids));
  for (const auto& [id, a] : store.annotations()) {
    if (slide_id && a.slide_id != *slide_id) continue;
    const Label* la = a.label_by(person_a);
    const Label* lb = a.label_by(person_b);
    if (!la || !lb) continue;
    auto ia = index.find(la->class_id);
    auto ib = index.find(lb->class_id);
    if (ia == index.end() || ib == index.end()) continue;
    ++m.at(ia->second, ib->second);
  }
  return m;
}

KappaResult cohens_kappa(const ConfusionMatrix& m) {
  const uint64_t n = m.n();
  if (n == 0) throw UndefinedKappaError("kappa undefined: no doubly labeled annotations");
  const std::size_t k = m.size();
  std::vector<uint64_t> row(k, 0), col(k, 0);
  uint64_t trace = 0;
  for (std::size_t i = 0; i < k; ++i) {
    trace += m.at(i, i);
    for (std::size_t j = 0; j < k; ++j) {
      row[i] += m.at(i, j);
      col[j] += m.at(i, j);
    }
  }
  const double nd = static_cast<double>(n);
  KappaResult r;
  r.p_o = static_cast<double>(trace) / nd;
  double chance = 0;
  for (std::size_t i = 0; i < k; ++i) {
    chance += static_cast<double>(row[i]) * static_cast<double>(col[i]);
  }
  r.p_e = chance / (nd * nd);
  if (r.p_e >= 1.0) throw UndefinedKappaError("kappa undefined: chance agreement is 1");
  r.kappa = (r.p_o - r.p_e) / (1.0 - r.p_e);
  return r;
}

std::string_view to_string(AnnotationPass pass) {
  return pass == AnnotationPass::First ? "first" : "second";
}

TimingStats annotation_timing(const AnnotationStore& store, int64_t person_id,
                              double gap_cutoff_s, AnnotationPass pass) {
  if (!(gap_cutoff_s > 0)) throw RangeError("gap cutoff must be positive");
  if (!store.find_person(person_id)) {
    throw NotFoundError("unknown person " + std::to_string(person_id));
  }
  std::map<int64_t, std::vector<int64_t>> per_slide;
  std::size_t events = 0;
  for (const auto& [id, a] : store.annotations()) {
    const Label* l = a.label_by(person_id);
    if (!l) continue;
    const bool own = a.creator_id == person_id;
    if (own != (pass == AnnotationPass::First)) continue;
    per_slide[a.slide_id].push_back(l->timestamp_ms);
    ++events;
  }

  TimingStats t;
  t.person_id = person_id;
  t.pass = pass;
  t.gap_cutoff_s = gap_cutoff_s;
  if (events < 2) return t;
  t.n_events = events;

  std::vector<double> gaps;
  for (auto& [slide, stamps] : per_slide) {
    std::sort(stamps.begin(), stamps.end());
    for (std::size_t i = 1; i < stamps.size(); ++i) {
      const double d = static_cast<double>(stamps[i] - stamps[i - 1]) / 1000.0;
      if (d > 0 && d <= gap_cutoff_s) gaps.push_back(d);
    }
  }
  t.n_intervals = gaps.size();
  if (gaps.empty()) return t;
  t.mean_s = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
  std::sort(gaps.begin(), gaps.end());
  const std::size_t mid = gaps.size() / 2;
  t.median_s = gaps.size() % 2 ? gaps[mid] : 0.5 * (gaps[mid - 1] + gaps[mid]);
  return t;
}

std::string format_confusion_table(const AnnotationStore& store, const ConfusionMatrix& m) {
  std::vector<std::string> names;
  std::size_t width = 8;
  for (int64_t id : m.class_ids) {
    const ClassDef* c = store.find_class(id);
    names.push_back(c ? c->name : std::to_string(id));
    width = std::max(width, names.back().size() + 2);
  }
  std::ostringstream os;
  os << std::setw(static_cast<int>(width)) << "A \\ B";
  for (const auto& name : names) os << std::setw(static_cast<int>(width)) << name;
  os << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    os << std::setw(static_cast<int>(width)) << names[i];
    for (std::size_t j = 0; j < m.size(); ++j) os << std::setw(static_cast<int>(width)) << m.at(i, j);
    os << '\n';
  }
  os << "n = " << m.n() << '\n';
  if (m.n() > 0) {
    try {
      const KappaResult k = cohens_kappa(m);
      os << std::fixed << std::setprecision(5) << "p_o = " << k.p_o << "\np_e = " << k.p_e
         << "\nkappa = " << k.kappa << '\n';
    } catch (const UndefinedKappaError&) {
      os << "kappa = undefined\n";
    }
  } else {
    os << "kappa = undefined\n";
  }
  return os.str();
}

std::string kappa_report_json(const ConfusionMatrix& m) {
  json matrix = json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.size(); ++j) row.push_back(m.at(i, j));
    matrix.push_back(std::move(row));
  }
  json doc{{"class_ids", m.class_ids}, {"matrix", std::move(matrix)}, {"n", m.n()},
           {"p_o", nullptr},          {"p_e", nullptr},            {"kappa", nullptr}};
  if (m.n() > 0) {
    try {
      const KappaResult k = cohens_kappa(m);
      doc["p_o"] = k.p_o;
      doc["p_e"] = k.p_e;
      doc["kappa"] = k.kappa;
    } catch (const UndefinedKappaError&) {
      const uint64_t n = m.n();
      uint64_t trace = 0;
      for (std::size_t i = 0; i < m.size(); ++i) trace += m.at(i, i);
      doc["p_o"] = static_cast<double>(trace) / static_cast<double>(n);
      doc["p_e"] = 1.0;
    }
  }
  return doc.dump();
}

std::string timing_report_json(const TimingStats& t) {
  json doc{{"person_id", t.person_id},
           {"pass", to_string(t.pass)},
           {"n_events", t.n_events},
           {"n_intervals", t.n_intervals},
           {"gap_cutoff_s", t.gap_cutoff_s},
           {"mean_s", nullptr},
           {"median_s", nullptr}};
  if (t.mean_s) doc["mean_s"] = *t.mean_s;
  if (t.median_s) doc["median_s"] = *t.median_s;
  return doc.dump();
}

}  // namespace slideanno
