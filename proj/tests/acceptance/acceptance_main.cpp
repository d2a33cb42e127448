// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances and sizes are fixed here and nowhere else.

#include <algorithm>
#include <atomic>
#include <map>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"
#include "slideanno/annostore.hpp"
#include "slideanno/discovery.hpp"
#include "slideanno/pyramid.hpp"
#include "slideanno/screening.hpp"
#include "slideanno/service.hpp"
#include "slideanno/stats.hpp"
#include "slideanno/synthetic.hpp"
#include "slideanno/wire.hpp"
#ifdef SLIDEANNO_HAVE_CLI
#include "cli.hpp"
#endif

using namespace slideanno;
using nlohmann::json;
using slideanno::testing::TempDir;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  void fail(const std::string& why) {
    if (pass_) first_ = why;
    pass_ = false;
  }
  void expect(bool cond, const std::string& why) {
    if (!cond) fail(why);
  }
  Verdict verdict(std::string detail) const {
    return {pass_, pass_ ? std::move(detail) : first_};
  }

 private:
  bool pass_ = true;
  std::string first_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ConfusionMatrix to_matrix(const std::vector<std::vector<uint64_t>>& rows) {
  std::vector<int64_t> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) ids.push_back(static_cast<int64_t>(i) + 1);
  ConfusionMatrix m(ids);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) m.at(i, j) = rows[i][j];
  }
  return m;
}

// --- kappa ---------------------------------------------------------------

Verdict kappa_oracle() {
  Checker c;
  TempDir dir("acc-kappa");
  AnnotationStore fixture = testing::basic_store(2);
  testing::add_matrix_annotations(fixture, 1, 1, 2, testing::kStudyMatrix);
  save_store(fixture, dir / "db.json");

  const auto t0 = std::chrono::steady_clock::now();
  const AnnotationStore db = load_store(dir / "db.json");
  const ConfusionMatrix m = confusion_matrix(db, 1, 1, 2);
  const KappaResult k = cohens_kappa(m);
  const double elapsed = seconds_since(t0);

  const auto direct = oracle::kappa(testing::kStudyMatrix);
  c.expect(m == to_matrix(testing::kStudyMatrix), "matrix read back differs from the table");
  c.expect(m.n() == 71081, "n != 71081");
  c.expect(std::abs(k.p_o - 61806.0 / 71081.0) <= 1e-9, "p_o off by more than 1e-9");
  c.expect(std::abs(k.kappa - 0.8057) <= 0.0005, "kappa outside 0.8057 +/- 0.0005: " + fmt("%.6f", k.kappa));
  c.expect(std::abs(k.kappa - static_cast<double>(direct.kappa)) <= 1e-12, "kappa disagrees with direct recomputation");
  c.expect(elapsed < 1.0, "load + kappa took " + fmt("%.3f s", elapsed));
  return c.verdict("kappa=" + fmt("%.6f", k.kappa) + " p_o=" + fmt("%.9f", k.p_o) + " (published figure: 0.815 over 71,561 labels) in " +
                   fmt("%.3f s", elapsed));
}

Verdict kappa_properties() {
  Checker c;
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng() % 7;
    std::vector<std::vector<uint64_t>> rows(k, std::vector<uint64_t>(k, 0));
    for (std::size_t i = 0; i < k; ++i) rows[i][i] = rng() % 1000;
    rows[0][0] += 1;
    rows[1][1] += 1;
    const double kappa = cohens_kappa(to_matrix(rows)).kappa;
    c.expect(std::abs(kappa - 1.0) <= 1e-12, "diagonal matrix kappa " + fmt("%.17g", kappa));
  }
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng() % 7;
    const uint64_t v = 1 + rng() % 10000;
    const std::vector<std::vector<uint64_t>> rows(k, std::vector<uint64_t>(k, v));
    const double kappa = cohens_kappa(to_matrix(rows)).kappa;
    c.expect(std::abs(kappa) < 1e-12, "all-equal matrix kappa " + fmt("%.3g", kappa));
  }
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + rng() % 7;
    std::vector<std::vector<uint64_t>> rows(k, std::vector<uint64_t>(k));
    for (auto& r : rows) {
      for (auto& x : r) x = rng() % 500;
    }
    rows[0][0] += 1;
    rows[1][1] += 1;
    const ConfusionMatrix m = to_matrix(rows);
    const double base = cohens_kappa(m).kappa;
    const uint64_t scale = 2 + rng() % 1000;
    ConfusionMatrix scaled = m;
    for (auto& x : scaled.counts) x *= scale;
    c.expect(std::abs(cohens_kappa(scaled).kappa - base) <= 1e-12, "kappa changed under count scaling");
    c.expect(std::abs(cohens_kappa(m.transposed()).kappa - base) <= 1e-12, "kappa changed under transposition");
  }
  return c.verdict("200 diagonal, 200 all-equal, 500 scaling/transposition trials");
}

// --- Otsu ----------------------------------------------------------------

Verdict otsu_equivalence() {
  Checker c;
  std::mt19937_64 rng(77);
  const auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    Histogram h{};
    switch (trial % 3) {
      case 0:  // sparse spikes
        for (int k = 0, n = 2 + static_cast<int>(rng() % 30); k < n; ++k) h[rng() % 256] += 1 + rng() % 100000;
        break;
      case 1:  // dense noise
        for (auto& v : h) v = rng() % 1000;
        break;
      default: {  // two or three gaussian modes, like slide overviews
        std::normal_distribution<double> mode;
        const int modes = 2 + static_cast<int>(rng() % 2);
        for (int m = 0; m < modes; ++m) {
          const double mu = static_cast<double>(rng() % 256), sd = 2.0 + static_cast<double>(rng() % 30);
          const int count = 1000 + static_cast<int>(rng() % 50000);
          std::normal_distribution<double> g(mu, sd);
          for (int i = 0; i < count; ++i) {
            const long v = std::lround(g(rng));
            if (v >= 0 && v < 256) ++h[v];
          }
        }
        h[rng() % 256] += 1;
        h[rng() % 256] += 1;
      }
    }
    if (std::all_of(h.begin(), h.end(), [](uint64_t v) { return v == 0; })) h[0] = 1;
    const int want = oracle::otsu(h);
    const OtsuResult got = otsu_threshold(h);
    if (got.degenerate) {
      // A single occupied bin has no between-class variance at all.
      c.expect(std::count_if(h.begin(), h.end(), [](uint64_t v) { return v > 0; }) == 1,
               "degenerate result on a multi-bin histogram");
    } else {
      c.expect(got.threshold == want, "trial " + std::to_string(trial) + ": got " + std::to_string(got.threshold) +
                                          ", exhaustive " + std::to_string(want));
    }
  }
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 5.0, "took " + fmt("%.3f s", elapsed));
  return c.verdict("1000 histograms in " + fmt("%.3f s", elapsed));
}

// --- screening and tissue mask -------------------------------------------

struct Fixture {
  std::filesystem::path dir;
  SyntheticSpec spec;
};

std::vector<Fixture> make_blob_fixtures(const TempDir& root, int count) {
  std::vector<Fixture> out;
  for (int i = 0; i < count; ++i) {
    const uint64_t seed = 1000 + static_cast<uint64_t>(i);
    std::mt19937_64 rng(seed);
    const int64_t w = 1024 + static_cast<int64_t>(rng() % 3) * 256;
    const int64_t h = 768 + static_cast<int64_t>(rng() % 3) * 256;
    const SyntheticSpec spec = random_synthetic_spec(seed, w, h, 1 + static_cast<int>(rng() % 4),
                                                     static_cast<int>(rng() % 20));
    const auto dir = root / ("slide" + std::to_string(i));
    generate_synthetic_slide(spec, dir);
    out.push_back({dir, spec});
  }
  return out;
}

Verdict screening_coverage(const std::vector<Fixture>& fixtures, const TempDir& root, double generate_s) {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t covered_px = 0, kept = 0;
  for (const Fixture& f : fixtures) {
    const TissueMask tm = compute_tissue_mask(open_slide(f.dir), kDefaultOverviewDownsample, 2);
    const int64_t cell = 128 + 64 * static_cast<int64_t>(f.spec.seed % 4);
    // One level-0 pixel of a full cell.
    const double one_pixel = 1.0 / static_cast<double>(cell * cell);
    const ScreeningPlan plan = build_screening_plan(tm, cell, one_pixel);
    kept += plan.cells.size();
    std::set<std::pair<int64_t, int64_t>> cells;
    for (std::size_t i = 0; i < plan.cells.size(); ++i) {
      const GridCell& g = plan.cells[i];
      cells.insert({g.row, g.col});
      if (i > 0) {
        const GridCell& p = plan.cells[i - 1];
        c.expect(p.row < g.row || (p.row == g.row && p.col < g.col), "plan is not strictly row-major");
      }
    }
    for (int my = 0; my < tm.mask.height(); ++my) {
      for (int mx = 0; mx < tm.mask.width(); ++mx) {
        if (!tm.mask.get(mx, my)) continue;
        const Rect fp = tm.footprint(mx, my);
        for (int64_t row = fp.y / cell; row <= (fp.y + fp.h - 1) / cell; ++row) {
          for (int64_t col = fp.x / cell; col <= (fp.x + fp.w - 1) / cell; ++col) {
            c.expect(cells.count({row, col}) == 1, "mask pixel not covered by the plan");
          }
        }
        ++covered_px;
      }
    }
  }
  for (int i = 0; i < 5; ++i) {
    SyntheticSpec white;
    white.width = 1024 + 256 * i;
    white.height = 1024;
    const auto dir = root / ("white" + std::to_string(i));
    generate_synthetic_slide(white, dir);
    const TissueMask tm = compute_tissue_mask(open_slide(dir));
    c.expect(build_screening_plan(tm, 256, 1.0 / (256.0 * 256.0)).cells.empty(), "all-white slide has a non-empty plan");
  }
  const double elapsed = seconds_since(t0) + generate_s;
  c.expect(elapsed < 30.0, "took " + fmt("%.2f s", elapsed));
  return c.verdict(std::to_string(fixtures.size()) + " slides, " + std::to_string(covered_px) + " mask pixels, " +
                   std::to_string(kept) + " cells, 5 blank slides, " + fmt("%.2f s", elapsed) + " incl. generation");
}

Verdict tissue_mask_accuracy(const std::vector<Fixture>& fixtures) {
  Checker c;
  double worst = 1.0;
  for (const Fixture& f : fixtures) {
    const TissueMask tm = compute_tissue_mask(open_slide(f.dir), kDefaultOverviewDownsample, 2);
    const BinaryMask truth = oracle::truth_mask(load_truth(f.dir), tm.scale);
    if (truth.width() != tm.mask.width() || truth.height() != tm.mask.height()) {
      c.fail("mask size differs from truth grid");
      continue;
    }
    std::size_t agree = 0;
    for (int y = 0; y < truth.height(); ++y) {
      for (int x = 0; x < truth.width(); ++x) agree += truth.get(x, y) == tm.mask.get(x, y);
    }
    const double ratio = static_cast<double>(agree) / (static_cast<double>(truth.width()) * truth.height());
    worst = std::min(worst, ratio);
  }
  c.expect(worst >= 0.99, "worst agreement " + fmt("%.5f", worst));
  return c.verdict(std::to_string(fixtures.size()) + " blob slides, worst agreement " + fmt("%.5f", worst));
}

// --- discovery -----------------------------------------------------------

Verdict discovery() {
  Checker c;
  std::string detail;
  for (int n : {1, 10, 500}) {
    std::mt19937_64 rng(static_cast<uint64_t>(n) * 31);
    AnnotationStore base = testing::basic_store(2);
    for (int i = 0; i < n; ++i) {
      if (rng() % 5 == 0) {
        const int64_t x = 50 + static_cast<int64_t>(rng() % 9900), y = 50 + static_cast<int64_t>(rng() % 7900);
        const std::vector<Point> pts{{x - 40, y - 30}, {x + 45, y - 10}, {x + 10, y + 40}};
        base.add_polygon_annotation(1, pts, 1, 1, 1000 + i);
      } else {
        base.add_center_annotation(1, static_cast<int64_t>(rng() % 10000), static_cast<int64_t>(rng() % 8000), 1,
                                   1 + static_cast<int64_t>(rng() % 4), 1000 + i);
      }
    }
    auto simulate = [&](std::vector<Rect>& views) {
      AnnotationStore s = base;
      DiscoveryState st(2, 1, {1000, 1000, 4242, 0.25});
      int64_t t = 10'000;
      while (auto v = st.next_view(s)) {
        views.push_back(*v);
        if (static_cast<int>(views.size()) > n) {
          c.fail("N=" + std::to_string(n) + ": more than N view fetches");
          break;
        }
        bool work = false;
        for (const Annotation& a : s.query_viewport(1, *v)) {
          if (a.labeled_by(2)) continue;
          work = true;
          ++t;
          s.set_label(a.id, 2, 1 + t % 4, t);
        }
        c.expect(work, "N=" + std::to_string(n) + ": view without unlabeled annotations");
      }
      c.expect(st.remaining(s) == 0, "N=" + std::to_string(n) + ": rater finished with work left");
    };
    std::vector<Rect> first, second;
    simulate(first);
    simulate(second);
    c.expect(first == second, "N=" + std::to_string(n) + ": replay with the same seed differs");
    detail += "N=" + std::to_string(n) + ":" + std::to_string(first.size()) + " views ";
  }
  return c.verdict(detail + "(replayed identically)");
}

// --- wire blinding ---------------------------------------------------------

/// Every serialized class id / class color that belongs to a label the viewer
/// did not write must be absent from the response bytes.
void scan_for_foreign(Checker& c, const AnnotationStore& s, int64_t viewer, const std::string& body) {
  std::set<int64_t> own;
  for (const auto& [id, a] : s.annotations()) {
    if (const Label* l = a.label_by(viewer)) own.insert(l->class_id);
  }
  for (const auto& [cid, cls] : s.classes()) {
    if (own.count(cid)) continue;
    c.expect(body.find("\"class_id\":" + std::to_string(cid)) == std::string::npos, "foreign class id in response");
    c.expect(body.find(std::to_string(cid)) == std::string::npos, "foreign class id bytes in response");
    c.expect(body.find(color_to_hex(cls.color)) == std::string::npos, "foreign class color in response");
  }
  const json doc = json::parse(body);
  for (const auto& item : doc) {
    const Annotation* a = s.find_annotation(item["id"].get<int64_t>());
    const Label* mine = a ? a->label_by(viewer) : nullptr;
    if (mine) {
      c.expect(item.value("class_id", int64_t{-1}) == mine->class_id, "own label missing or wrong");
    } else {
      c.expect(!item.contains("class_id"), "class_id on an annotation the viewer has not labeled");
      c.expect(item["color"] == color_to_hex(kUnknownColor), "unlabeled annotation not in the unknown color");
    }
  }
}

AnnotationStore random_wire_store(std::mt19937_64& rng) {
  AnnotationStore s;
  const int persons = 2 + static_cast<int>(rng() % 4);
  for (int p = 1; p <= persons; ++p) s.add_person({p, "p" + std::to_string(p)});
  const int classes = 2 + static_cast<int>(rng() % 6);
  for (int k = 0; k < classes; ++k) {
    // Ids and colors that cannot collide with coordinates or each other.
    const int64_t id = 900001 + k * 1111;
    s.add_class({id, "c" + std::to_string(k),
                 Rgb{static_cast<uint8_t>(17 + 29 * k), static_cast<uint8_t>(201 - 13 * k), static_cast<uint8_t>(99 + 7 * k)}});
  }
  s.add_slide({1, "s", "x", 5000, 5000});
  std::vector<int64_t> class_ids;
  for (const auto& [id, cls] : s.classes()) class_ids.push_back(id);
  const int n = 1 + static_cast<int>(rng() % 200);
  for (int i = 0; i < n; ++i) {
    const int64_t creator = 1 + static_cast<int64_t>(rng() % persons);
    const int64_t id = s.add_center_annotation(1, static_cast<int64_t>(rng() % 5000), static_cast<int64_t>(rng() % 5000),
                                               creator, class_ids[rng() % class_ids.size()], i);
    for (int64_t p = 1; p <= persons; ++p) {
      if (p != creator && rng() % 3 == 0) s.set_label(id, p, class_ids[rng() % class_ids.size()], 10'000 + i);
    }
  }
  return s;
}

Verdict wire_blinding() {
  Checker c;
  std::mt19937_64 rng(31337);
  std::size_t scanned = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const AnnotationStore s = random_wire_store(rng);
    const int64_t viewer = 1 + static_cast<int64_t>(rng() % s.persons().size());
    const Rect view{static_cast<int64_t>(rng() % 3000), static_cast<int64_t>(rng() % 3000), 2000, 2000};
    for (const Rect& r : {view, Rect{0, 0, 5000, 5000}}) {
      const auto visible = s.query_viewport(1, r);
      const std::string body = descriptors_to_json(blinded_render(s, visible, viewer));
      scan_for_foreign(c, s, viewer, body);
      scanned += visible.size();
    }
  }

  // Live service: 4 sessions issue 1,000 random mutations concurrently.
  TempDir dir("acc-wire");
  SyntheticSpec spec;
  spec.width = 2048;
  spec.height = 2048;
  generate_synthetic_slide(spec, dir / "slide");
  std::mt19937_64 srng(5);
  AnnotationStore seed = random_wire_store(srng);
  AnnotationStore db;
  for (int p = 1; p <= 4; ++p) db.add_person({p, "p" + std::to_string(p)});
  for (const auto& [id, cls] : seed.classes()) db.add_class(cls);
  db.add_slide({1, "slide", (dir / "slide").string(), 2048, 2048});
  save_store(db, dir / "db.json");
  std::vector<int64_t> class_ids;
  for (const auto& [id, cls] : db.classes()) class_ids.push_back(id);

  ServiceConfig cfg;
  cfg.listen_addr = "127.0.0.1:0";
  cfg.database_path = dir / "db.json";
  cfg.slides = {{1, dir / "slide"}};
  for (int p = 1; p <= 4; ++p) cfg.tokens["session-" + std::to_string(p)] = p;
  std::atomic<int64_t> clock{1'000'000};
  Service service(cfg, [&] { return ++clock; });
  const int port = service.start();

  std::mutex mu;
  std::vector<int64_t> created;
  std::map<std::pair<int64_t, int64_t>, int64_t> last_write;  // (annotation, person) -> class
  std::atomic<int> spoofs_rejected{0}, spoofs{0}, errors{0}, reads{0};
  std::vector<std::thread> pool;
  for (int p = 1; p <= 4; ++p) {
    pool.emplace_back([&, p] {
      std::mt19937_64 r(static_cast<uint64_t>(p) * 97);
      httplib::Client client("127.0.0.1", port);
      client.set_bearer_token_auth("session-" + std::to_string(p));
      for (int i = 0; i < 250; ++i) {
        const int op = static_cast<int>(r() % 10);
        const int64_t cls = class_ids[r() % class_ids.size()];
        int64_t target = 0;
        {
          std::lock_guard lock(mu);
          if (!created.empty()) target = created[r() % created.size()];
        }
        if (op < 3 || target == 0) {
          const json body{{"x", static_cast<int64_t>(r() % 2048)}, {"y", static_cast<int64_t>(r() % 2048)}, {"class_id", cls}};
          auto res = client.Post("/slides/1/annotations", body.dump(), "application/json");
          if (!res || res->status != 201) {
            ++errors;
            continue;
          }
          const int64_t id = json::parse(res->body)["id"].get<int64_t>();
          // Only this session writes (id, p), so its own order is the server order.
          std::lock_guard lock(mu);
          created.push_back(id);
          last_write[{id, p}] = cls;
        } else if (op < 7) {
          auto res = client.Put("/annotations/" + std::to_string(target) + "/label", json{{"class_id", cls}}.dump(),
                                "application/json");
          if (!res || res->status != 200) {
            ++errors;
            continue;
          }
          std::lock_guard lock(mu);
          last_write[{target, p}] = cls;
        } else if (op < 8) {
          const int64_t other = 1 + (p % 4);
          ++spoofs;
          auto res = client.Put("/annotations/" + std::to_string(target) + "/label",
                                json{{"class_id", cls}, {"person_id", other}}.dump(), "application/json");
          if (res && res->status == 403) ++spoofs_rejected;
        } else {
          auto res = client.Get("/slides/1/annotations");
          if (!res || res->status != 200) {
            ++errors;
            continue;
          }
          ++reads;
          // Compare against the store as it is now; labels only accumulate,
          // so anything this viewer lacks now it also lacked at read time.
          const AnnotationStore snap = service.store().snapshot();
          const json doc = json::parse(res->body);
          for (const auto& item : doc) {
            const Annotation* a = snap.find_annotation(item["id"].get<int64_t>());
            if (!a || a->labeled_by(p)) continue;
            if (item.contains("class_id")) errors += 1000;
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  service.stop();

  const AnnotationStore final_db = load_store(dir / "db.json");
  c.expect(errors == 0, "unexpected HTTP failures or leaked class ids: " + std::to_string(errors.load()));
  c.expect(spoofs == spoofs_rejected, "a spoofed write was not rejected");
  std::size_t labels = 0;
  for (const auto& [id, a] : final_db.annotations()) {
    for (const Label& l : a.labels) {
      ++labels;
      auto it = last_write.find({id, l.person_id});
      c.expect(it != last_write.end(), "label attributed to a person whose session never wrote it");
      if (it != last_write.end()) c.expect(it->second == l.class_id, "stored label differs from the session's last write");
    }
  }
  c.expect(labels == last_write.size(), "label count differs from writes issued");
  for (int64_t p = 1; p <= 4; ++p) {
    const std::string body =
        descriptors_to_json(blinded_render(final_db, final_db.query_viewport(1, {0, 0, 2048, 2048}), p));
    scan_for_foreign(c, final_db, p, body);
  }
  return c.verdict("100 stores (" + std::to_string(scanned) + " descriptors), 1000 live mutations by 4 sessions, " +
                   std::to_string(spoofs.load()) + " spoofs rejected, " + std::to_string(reads.load()) + " reads scanned");
}

// --- pyramid ---------------------------------------------------------------

Verdict pyramid_fidelity() {
  Checker c;
  TempDir dir("acc-pyr");
  const SyntheticSpec spec = random_synthetic_spec(99, 2000, 1500, 3, 40, 256);
  generate_synthetic_slide(spec, dir / "slide");
  const PyramidSlide slide = open_slide(dir / "slide");
  const Raster base = render_synthetic(spec);

  std::vector<Raster> levels;
  for (int k = 0; k < slide.level_count(); ++k) {
    const LevelInfo& li = slide.level(k);
    const Raster got = slide.read_region(k, {0, 0}, static_cast<int>(li.width), static_cast<int>(li.height));
    const Raster want = k == 0 ? base : oracle::box_filter(base, 1 << k);
    c.expect(got == want, "level " + std::to_string(k) + " full read differs from " + (k ? "box-filter oracle" : "generator output"));
    levels.push_back(want);
  }

  std::mt19937_64 rng(7);
  int out_of_bounds = 0;
  for (int i = 0; i < 10000; ++i) {
    const int k = static_cast<int>(rng() % levels.size());
    const int64_t x = static_cast<int64_t>(rng() % 2600) - 300, y = static_cast<int64_t>(rng() % 2000) - 250;
    const int w = 1 + static_cast<int>(rng() % 96), h = 1 + static_cast<int>(rng() % 96);
    Raster got;
    try {
      got = slide.read_region(k, {x, y}, w, h);
    } catch (const std::exception& e) {
      c.fail(std::string("read_region threw: ") + e.what());
      continue;
    }
    const Raster& lv = levels[k];
    const int64_t ox = floor_div(x, int64_t{1} << k), oy = floor_div(y, int64_t{1} << k);
    bool oob = false;
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        const int64_t lx = ox + xx, ly = oy + yy;
        const bool inside = lx >= 0 && ly >= 0 && lx < lv.width() && ly < lv.height();
        static const uint8_t white[4] = {255, 255, 255, 255};
        const uint8_t* want = inside ? lv.pixel(static_cast<int>(lx), static_cast<int>(ly)) : white;
        oob = oob || !inside;
        if (std::memcmp(got.pixel(xx, yy), want, 4) != 0) {
          c.fail("region read " + std::to_string(i) + " differs at (" + std::to_string(xx) + "," + std::to_string(yy) + ")");
          yy = h;
          break;
        }
      }
    }
    out_of_bounds += oob;
  }
  return c.verdict(std::to_string(levels.size()) + " levels exact, 10000 random reads (" + std::to_string(out_of_bounds) +
                   " partly out of bounds)");
}

// --- persistence -------------------------------------------------------------

Verdict persistence() {
  Checker c;
  TempDir dir("acc-persist");
  std::mt19937_64 rng(10000);
  AnnotationStore s = testing::basic_store(4, 6);
  std::size_t labels = 0;
  while (labels < 10000) {
    testing::add_random_annotations(s, 1, 100, rng, 1'700'000'000'000 + static_cast<int64_t>(labels) * 100000);
    labels = 0;
    for (const auto& [id, a] : s.annotations()) labels += a.labels.size();
  }
  save_store(s, dir / "db.json");
  c.expect(load_store(dir / "db.json") == s, "save/load round trip lost data");
#ifdef SLIDEANNO_HAVE_CLI
  std::ostringstream out, err;
  c.expect(cli::run({"export", "--db", (dir / "db.json").string(), "--out", (dir / "x.json").string()}, out, err) == 0,
           "export failed: " + err.str());
  c.expect(cli::run({"import", "--db", (dir / "fresh.json").string(), "--in", (dir / "x.json").string()}, out, err) == 0,
           "import failed: " + err.str());
  c.expect(load_store(dir / "fresh.json") == s, "export/import round trip lost data");
#else
  save_store(load_store(dir / "db.json"), dir / "x.json");
  c.expect(load_store(dir / "x.json") == s, "export/import round trip lost data");
#endif
  AnnotationStore merged;
  merged.merge(s);
  c.expect(merged == s, "merge into an empty store is not the identity");
  return c.verdict(std::to_string(s.annotations().size()) + " annotations, " + std::to_string(labels) + " labels");
}

// --- substitutes for the human-subject results --------------------------------

Verdict human_subject_substitute() {
  Checker c;
  // Timing is computed from inter-event differences: a rater labeling at
  // fixed spacing must come out at exactly that spacing, breaks excluded.
  std::mt19937_64 rng(66);
  for (double target : {6.6, 6.3, 2.0, 2.6}) {
    AnnotationStore s = testing::basic_store(1);
    int64_t t = 1'700'000'000'000;
    const int64_t step = static_cast<int64_t>(target * 1000.0);
    for (int i = 0; i < 500; ++i) {
      s.add_center_annotation(1, static_cast<int64_t>(rng() % 10000), static_cast<int64_t>(rng() % 8000), 1, 1, t);
      t += (i % 100 == 99) ? 3'600'000 : step;
    }
    const TimingStats st = annotation_timing(s, 1);
    c.expect(st.mean_s && std::abs(*st.mean_s - target) < 1e-9, "timing mean differs from spacing " + fmt("%.1f", target));
    c.expect(st.n_intervals == 495, "session breaks not excluded");
  }
  const auto k = cohens_kappa(to_matrix(testing::kStudyMatrix));
  c.expect(std::abs(k.kappa - static_cast<double>(oracle::kappa(testing::kStudyMatrix).kappa)) <= 1e-12,
           "kappa formula disagrees with the oracle");
  return c.verdict("not reproducible without the study's raters; formula oracle and timing recomputation hold");
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const std::string& name, const std::function<Verdict()>& fn) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << name << "  " << v.detail << std::endl;
  };

  report("kappa oracle", kappa_oracle);
  report("kappa properties", kappa_properties);
  report("otsu equivalence", otsu_equivalence);
  {
    TempDir root("acc-screen");
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Fixture> fixtures;
    try {
      fixtures = make_blob_fixtures(root, 50);
    } catch (const std::exception& e) {
      std::cerr << "fixture generation failed: " << e.what() << '\n';
    }
    const double generate_s = seconds_since(t0);
    report("screening coverage", [&] { return screening_coverage(fixtures, root, generate_s); });
    report("tissue mask accuracy", [&] { return tissue_mask_accuracy(fixtures); });
  }
  report("discovery termination and soundness", discovery);
  report("wire blinding", wire_blinding);
  report("pyramid fidelity", pyramid_fidelity);
  report("persistence", persistence);
  report("human-subject results (substituted)", human_subject_substitute);

  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criterion(s) failed" : "acceptance: all criteria passed")
            << std::endl;
  return failures ? 1 : 0;
}
