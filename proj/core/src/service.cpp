#include "slideanno/service.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "slideanno/error.hpp"
#include "slideanno/pyramid.hpp"
#include "slideanno/stats.hpp"
#include "slideanno/wire.hpp"

namespace slideanno {

namespace fs = std::filesystem;
using nlohmann::json;

int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

ServiceConfig parse_service_config(std::string_view json_text, const fs::path& base_dir) {
  ServiceConfig cfg;
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  try {
    const json doc = json::parse(json_text);
    cfg.listen_addr = doc.value("listen_addr", cfg.listen_addr);
    cfg.database_path = resolve(doc.at("database_path").get<std::string>());
    for (const auto& s : doc.at("slides")) {
      cfg.slides.push_back({s.at("id").get<int64_t>(), resolve(s.at("container_path").get<std::string>())});
    }
    const json tokens = doc.value("tokens", json::object());
    for (const auto& [token, person] : tokens.items()) {
      cfg.tokens.emplace(token, person.get<int64_t>());
    }
    if (doc.contains("screening")) {
      const auto& s = doc["screening"];
      cfg.screening.cell_size = s.value("cell_size", cfg.screening.cell_size);
      cfg.screening.occupancy_min = s.value("occupancy_min", cfg.screening.occupancy_min);
      cfg.screening.se_radius = s.value("se_radius", cfg.screening.se_radius);
    }
    if (doc.contains("discovery")) {
      const auto& d = doc["discovery"];
      cfg.discovery.viewport_w = d.value("viewport_w", cfg.discovery.viewport_w);
      cfg.discovery.viewport_h = d.value("viewport_h", cfg.discovery.viewport_h);
      cfg.discovery.seed = d.value("seed", cfg.discovery.seed);
      cfg.discovery.jitter_fraction = d.value("jitter_fraction", cfg.discovery.jitter_fraction);
    }
    cfg.hit_radius = doc.value("hit_radius", cfg.hit_radius);
    cfg.tile_cache_capacity = doc.value("tile_cache_capacity", cfg.tile_cache_capacity);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid service config: ") + e.what());
  }
  if (cfg.slides.empty()) throw ValidationError("service config names no slides");
  if (cfg.screening.cell_size <= 0) throw ValidationError("screening.cell_size must be positive");
  if (!(cfg.screening.occupancy_min > 0 && cfg.screening.occupancy_min <= 1)) {
    throw ValidationError("screening.occupancy_min must lie in (0, 1]");
  }
  if (cfg.screening.se_radius < 0) throw ValidationError("screening.se_radius must be >= 0");
  if (cfg.discovery.viewport_w <= 0 || cfg.discovery.viewport_h <= 0) {
    throw ValidationError("discovery viewport must be positive");
  }
  if (!(cfg.hit_radius > 0)) throw ValidationError("hit_radius must be positive");
  return cfg;
}

ServiceConfig load_service_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_service_config(ss.str(), path.parent_path());
}

namespace {

struct HttpError {
  int status;
  std::string message;
};

struct SlideRuntime {
  int64_t id = 0;
  std::optional<PyramidSlide> slide;
  std::mutex mask_mu;
  std::optional<TissueMask> mask;
};

struct Session {
  int64_t person_id = 0;
  std::mutex mu;
  std::map<int64_t, DiscoveryState> discovery;
  std::map<int64_t, ScreeningPlan> screening;
};

uint64_t fnv1a(std::span<const uint8_t> bytes) {
  uint64_t h = 1469598103934665603ull;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

json rect_json(const Rect& r) { return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

int64_t int_param(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name)) throw HttpError{400, "missing parameter '" + name + "'"};
  const std::string v = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const long long out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(name);
    return out;
  } catch (const std::exception&) {
    throw HttpError{400, "parameter '" + name + "' is not an integer"};
  }
}

double real_param(const httplib::Request& req, const std::string& name, double fallback) {
  if (!req.has_param(name)) return fallback;
  try {
    return std::stod(req.get_param_value(name));
  } catch (const std::exception&) {
    throw HttpError{400, "parameter '" + name + "' is not a number"};
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_header("Cache-Control", "no-store");
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct Service::Impl {
  ServiceConfig config;
  Clock clock;
  SharedStore store;
  std::shared_ptr<TileCache> cache;
  std::map<int64_t, std::unique_ptr<SlideRuntime>> slides;
  std::map<std::string, std::unique_ptr<Session>> sessions;
  httplib::Server server;
  std::thread worker;
  std::mutex lifecycle_mu;
  bool bound = false;
  bool stopped = false;
  int bound_port = -1;

  Impl(ServiceConfig cfg, Clock clk) : config(std::move(cfg)), clock(std::move(clk)) {
    cache = std::make_shared<TileCache>(config.tile_cache_capacity);
    AnnotationStore db;
    if (fs::exists(config.database_path)) db = load_store(config.database_path);

    for (const auto& entry : config.slides) {
      auto rt = std::make_unique<SlideRuntime>();
      rt->id = entry.id;
      rt->slide = PyramidSlide::open(entry.container_path, cache);
      if (const SlideRecord* rec = db.find_slide(entry.id)) {
        if (rec->width != rt->slide->width() || rec->height != rt->slide->height()) {
          throw ValidationError("slide " + std::to_string(entry.id) +
                                " extent differs between database and container");
        }
      } else {
        db.add_slide({entry.id, entry.container_path.filename().string(),
                      entry.container_path.string(), rt->slide->width(), rt->slide->height()});
      }
      if (!slides.emplace(entry.id, std::move(rt)).second) {
        throw ValidationError("duplicate slide id " + std::to_string(entry.id) + " in config");
      }
    }
    for (const auto& [token, person] : config.tokens) {
      if (token.empty()) throw ValidationError("empty session token in config");
      if (!db.find_person(person)) db.add_person({person, "person-" + std::to_string(person)});
      auto s = std::make_unique<Session>();
      s->person_id = person;
      sessions.emplace(token, std::move(s));
    }
    store.write([&](AnnotationStore& s) { s = std::move(db); });
    install_routes();
  }

  Session& authenticate(const httplib::Request& req) {
    std::string token;
    const std::string auth = req.get_header_value("Authorization");
    if (auth.rfind("Bearer ", 0) == 0) {
      token = auth.substr(7);
    } else if (req.has_param("token")) {
      token = req.get_param_value("token");
    }
    auto it = sessions.find(token);
    if (token.empty() || it == sessions.end()) throw HttpError{401, "missing or unknown session token"};
    return *it->second;
  }

  SlideRuntime& slide_for(const httplib::Request& req) {
    int64_t id = 0;
    try {
      id = std::stoll(req.matches[1].str());
    } catch (const std::exception&) {
      throw HttpError{404, "unknown slide"};
    }
    auto it = slides.find(id);
    if (it == slides.end()) throw HttpError{404, "unknown slide " + std::to_string(id)};
    return *it->second;
  }

  const TissueMask& mask_for(SlideRuntime& rt) {
    std::lock_guard lock(rt.mask_mu);
    if (!rt.mask) {
      rt.mask = compute_tissue_mask(*rt.slide, kDefaultOverviewDownsample, config.screening.se_radius);
    }
    return *rt.mask;
  }

  ScreeningPlan& plan_for(Session& s, SlideRuntime& rt) {
    auto it = s.screening.find(rt.id);
    if (it == s.screening.end()) {
      it = s.screening
               .emplace(rt.id, build_screening_plan(mask_for(rt), config.screening.cell_size,
                                                    config.screening.occupancy_min, rt.id))
               .first;
    }
    return it->second;
  }

  DiscoveryState& discovery_for(Session& s, SlideRuntime& rt) {
    auto it = s.discovery.find(rt.id);
    if (it == s.discovery.end()) {
      DiscoveryConfig dc = config.discovery;
      // Distinct but reproducible streams per (person, slide).
      dc.seed = config.discovery.seed ^ (static_cast<uint64_t>(s.person_id) * 0x9e3779b97f4a7c15ull) ^
                (static_cast<uint64_t>(rt.id) << 32);
      it = s.discovery.emplace(rt.id, DiscoveryState(s.person_id, rt.id, dc)).first;
    }
    return it->second;
  }

  template <class Handler>
  httplib::Server::Handler wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const HttpError& e) {
        send_json(res, {{"error", e.message}}, e.status);
      } catch (const NotFoundError& e) {
        send_json(res, {{"error", e.what()}}, 404);
      } catch (const ValidationError& e) {
        send_json(res, {{"error", e.what()}}, 400);
      } catch (const RangeError& e) {
        send_json(res, {{"error", e.what()}}, 400);
      } catch (const json::exception& e) {
        send_json(res, {{"error", std::string("bad request body: ") + e.what()}}, 400);
      } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}}, 500);
      }
    };
  }

  static json parse_body(const httplib::Request& req) {
    try {
      json body = json::parse(req.body);
      if (!body.is_object()) throw HttpError{400, "request body must be a JSON object"};
      return body;
    } catch (const json::parse_error&) {
      throw HttpError{400, "request body is not valid JSON"};
    }
  }

  static void check_attribution(const json& body, const Session& s) {
    if (body.contains("person_id") && !body["person_id"].is_null() &&
        body["person_id"].get<int64_t>() != s.person_id) {
      throw HttpError{403, "sessions may only write their own labels"};
    }
  }

  void install_routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type, If-None-Match");
      res.status = 204;
    });

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, {{"status", "ok"}});
    });

    server.Get("/me", wrap([this](const httplib::Request& req, httplib::Response& res) {
      Session& s = authenticate(req);
      const std::string name = store.read([&](const AnnotationStore& db) {
        const Person* p = db.find_person(s.person_id);
        return p ? p->name : std::string{};
      });
      send_json(res, {{"person_id", s.person_id}, {"name", name}});
    }));

    server.Get("/classes", wrap([this](const httplib::Request& req, httplib::Response& res) {
      authenticate(req);
      json out = json::array();
      store.read([&](const AnnotationStore& db) {
        for (const auto& [id, c] : db.classes()) {
          out.push_back({{"id", id}, {"name", c.name}, {"color", color_to_hex(c.color)}});
        }
      });
      send_json(res, out);
    }));

    server.Get("/slides", wrap([this](const httplib::Request& req, httplib::Response& res) {
      authenticate(req);
      json out = json::array();
      for (const auto& [id, rt] : slides) {
        json levels = json::array();
        for (const auto& lv : rt->slide->layout().levels) {
          levels.push_back({{"downsample", lv.downsample}, {"width", lv.width}, {"height", lv.height}});
        }
        out.push_back({{"id", id},
                       {"width", rt->slide->width()},
                       {"height", rt->slide->height()},
                       {"tile_size", rt->slide->tile_size()},
                       {"levels", std::move(levels)}});
      }
      send_json(res, out);
    }));

    server.Get(R"(/slides/(\d+)/region)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      authenticate(req);
      SlideRuntime& rt = slide_for(req);
      const int64_t level = int_param(req, "level");
      const int64_t x = int_param(req, "x"), y = int_param(req, "y");
      const int64_t w = int_param(req, "w"), h = int_param(req, "h");
      if (level < 0 || level >= rt.slide->level_count()) throw HttpError{400, "invalid level"};
      if (w <= 0 || h <= 0 || w > 4096 || h > 4096) throw HttpError{400, "w and h must lie in [1, 4096]"};
      const Raster region = rt.slide->read_region(static_cast<int>(level), Point{x, y},
                                                  static_cast<int>(w), static_cast<int>(h));
      const std::vector<uint8_t> png = encode_png(region);
      char etag[24];
      std::snprintf(etag, sizeof etag, "\"%016llx\"", static_cast<unsigned long long>(fnv1a(png)));
      res.set_header("ETag", etag);
      res.set_header("Cache-Control", "public, max-age=31536000, immutable");
      if (req.get_header_value("If-None-Match") == etag) {
        res.status = 304;
        return;
      }
      res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
    }));

    server.Get(R"(/slides/(\d+)/annotations)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      Session& s = authenticate(req);
      SlideRuntime& rt = slide_for(req);
      Rect rect{0, 0, rt.slide->width(), rt.slide->height()};
      if (req.has_param("x") || req.has_param("y") || req.has_param("w") || req.has_param("h")) {
        rect = Rect{int_param(req, "x"), int_param(req, "y"), int_param(req, "w"), int_param(req, "h")};
        if (rect.empty()) throw HttpError{400, "w and h must be positive"};
      }
      const std::string body = store.read([&](const AnnotationStore& db) {
        const auto visible = db.query_viewport(rt.id, rect);
        const auto descriptors = blinded_render(db, visible, s.person_id);
        return descriptors_to_json(descriptors);
      });
      res.set_header("Cache-Control", "no-store");
      res.set_content(body, "application/json");
    }));

    server.Post(R"(/slides/(\d+)/annotations)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      Session& s = authenticate(req);
      SlideRuntime& rt = slide_for(req);
      const json body = parse_body(req);
      check_attribution(body, s);
      const std::string kind = body.value("kind", std::string("center"));
      const int64_t class_id = body.at("class_id").get<int64_t>();
      const int64_t ts = clock();
      int64_t id = 0;
      if (kind == "center") {
        const int64_t x = body.at("x").get<int64_t>(), y = body.at("y").get<int64_t>();
        id = store.write([&](AnnotationStore& db) {
          return db.add_center_annotation(rt.id, x, y, s.person_id, class_id, ts);
        });
      } else if (kind == "polygon") {
        std::vector<Point> pts;
        for (const auto& p : body.at("points")) {
          if (p.is_array() && p.size() == 2) {
            pts.push_back({p[0].get<int64_t>(), p[1].get<int64_t>()});
          } else {
            pts.push_back({p.at("x").get<int64_t>(), p.at("y").get<int64_t>()});
          }
        }
        id = store.write([&](AnnotationStore& db) {
          return db.add_polygon_annotation(rt.id, pts, s.person_id, class_id, ts);
        });
      } else {
        throw HttpError{400, "kind must be 'center' or 'polygon'"};
      }
      send_json(res, {{"id", id}}, 201);
    }));

    server.Put(R"(/annotations/(\d+)/label)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      Session& s = authenticate(req);
      const json body = parse_body(req);
      check_attribution(body, s);
      int64_t id = 0;
      try {
        id = std::stoll(req.matches[1].str());
      } catch (const std::exception&) {
        throw HttpError{404, "unknown annotation"};
      }
      const int64_t class_id = body.at("class_id").get<int64_t>();
      const int64_t ts = clock();
      store.write([&](AnnotationStore& db) { db.set_label(id, s.person_id, class_id, ts); });
      send_json(res, {{"id", id}, {"class_id", class_id}});
    }));

    server.Get(R"(/slides/(\d+)/hit)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      authenticate(req);
      SlideRuntime& rt = slide_for(req);
      const int64_t x = int_param(req, "x"), y = int_param(req, "y");
      const double radius = real_param(req, "radius", config.hit_radius);
      const auto hit = store.read([&](const AnnotationStore& db) { return db.hit_test(rt.id, x, y, radius); });
      send_json(res, {{"id", hit ? json(*hit) : json(nullptr)}});
    }));

    server.Get(R"(/slides/(\d+)/discovery/next)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      Session& s = authenticate(req);
      SlideRuntime& rt = slide_for(req);
      std::lock_guard lock(s.mu);
      DiscoveryState& ds = discovery_for(s, rt);
      json out;
      store.read([&](const AnnotationStore& db) {
        const auto view = ds.next_view(db);
        if (view) {
          out = {{"viewport", rect_json(*view)}, {"remaining", ds.remaining(db)}};
        } else {
          out = {{"done", true}, {"remaining", 0}};
        }
      });
      send_json(res, out);
    }));

    server.Get(R"(/slides/(\d+)/discovery/current)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      Session& s = authenticate(req);
      SlideRuntime& rt = slide_for(req);
      std::lock_guard lock(s.mu);
      DiscoveryState& ds = discovery_for(s, rt);
      json out;
      store.read([&](const AnnotationStore& db) {
        out = {{"viewport", ds.current_view() ? rect_json(*ds.current_view()) : json(nullptr)},
               {"complete", ds.view_complete(db)},
               {"remaining", ds.remaining(db)}};
      });
      send_json(res, out);
    }));

    server.Get(R"(/slides/(\d+)/screening/(next|prev|current))", wrap([this](const httplib::Request& req, httplib::Response& res) {
      Session& s = authenticate(req);
      SlideRuntime& rt = slide_for(req);
      const std::string dir = req.matches[2].str();
      std::lock_guard lock(s.mu);
      ScreeningPlan& plan = plan_for(s, rt);
      const Direction d = dir == "next" ? Direction::Next : dir == "prev" ? Direction::Prev : Direction::Current;
      const auto view = plan.navigate(d);
      json out{{"progress", plan.progress()}, {"index", plan.cursor}, {"total", plan.cells.size()}};
      if (view) {
        out["viewport"] = rect_json(*view);
      } else if (d == Direction::Next || plan.exhausted()) {
        out["done"] = true;
      } else {
        out["viewport"] = nullptr;
      }
      send_json(res, out);
    }));

    server.Get(R"(/slides/(\d+)/progress)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      Session& s = authenticate(req);
      SlideRuntime& rt = slide_for(req);
      std::lock_guard lock(s.mu);
      ScreeningPlan& plan = plan_for(s, rt);
      DiscoveryState& ds = discovery_for(s, rt);
      const std::size_t left = store.read([&](const AnnotationStore& db) { return ds.remaining(db); });
      send_json(res, {{"discovery_remaining", left},
                      {"screening_progress", plan.progress()},
                      {"screening_index", plan.cursor},
                      {"screening_cells", plan.cells.size()}});
    }));

    server.Get("/stats/kappa", wrap([this](const httplib::Request& req, httplib::Response& res) {
      authenticate(req);
      const int64_t a = int_param(req, "person_a"), b = int_param(req, "person_b");
      if (a == b) throw HttpError{400, "person_a and person_b must differ"};
      std::optional<int64_t> slide;
      if (req.has_param("slide")) slide = int_param(req, "slide");
      const std::string body = store.read([&](const AnnotationStore& db) {
        return kappa_report_json(confusion_matrix(db, slide, a, b));
      });
      res.set_header("Cache-Control", "no-store");
      res.set_content(body, "application/json");
    }));

    server.Get("/stats/timing", wrap([this](const httplib::Request& req, httplib::Response& res) {
      authenticate(req);
      const int64_t person = int_param(req, "person");
      const double cutoff = real_param(req, "gap_cutoff", kDefaultGapCutoffSeconds);
      if (!(cutoff > 0)) throw HttpError{400, "gap_cutoff must be positive"};
      json out;
      store.read([&](const AnnotationStore& db) {
        for (AnnotationPass pass : {AnnotationPass::First, AnnotationPass::Second}) {
          out[std::string(to_string(pass))] =
              json::parse(timing_report_json(annotation_timing(db, person, cutoff, pass)));
        }
      });
      send_json(res, out);
    }));
  }
};

Service::Service(ServiceConfig config, Clock clock)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(clock))) {}

Service::~Service() {
  try {
    stop();
  } catch (...) {
  }
}

int Service::bind() {
  std::lock_guard lock(impl_->lifecycle_mu);
  if (impl_->bound) return impl_->bound_port;
  const std::string& addr = impl_->config.listen_addr;
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ValidationError("listen_addr must be host:port");
  const std::string host = addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw ValidationError("listen_addr has a bad port");
  }
  if (port == 0) {
    port = impl_->server.bind_to_any_port(host);
    if (port < 0) throw IoError("cannot bind " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw IoError("cannot bind " + addr);
  }
  impl_->bound = true;
  impl_->bound_port = port;
  return port;
}

void Service::run() {
  if (!impl_->bound) bind();
  impl_->server.listen_after_bind();
}

int Service::start() {
  const int p = bind();
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return p;
}

void Service::stop() {
  {
    std::lock_guard lock(impl_->lifecycle_mu);
    if (impl_->stopped) return;
    impl_->stopped = true;
  }
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
  flush();
}

void Service::flush() {
  const AnnotationStore snap = impl_->store.snapshot();
  save_store(snap, impl_->config.database_path);
}

int Service::port() const { return impl_->bound_port; }
SharedStore& Service::store() { return impl_->store; }
const ServiceConfig& Service::config() const { return impl_->config; }

}  // namespace slideanno
