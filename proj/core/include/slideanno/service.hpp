#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "slideanno/annostore.hpp"
#include "slideanno/discovery.hpp"
#include "slideanno/screening.hpp"

namespace slideanno {

struct ServiceConfig {
  struct SlideEntry {
    int64_t id = 0;
    std::filesystem::path container_path;
  };
  struct Screening {
    int64_t cell_size = kDefaultCellSize;
    double occupancy_min = kDefaultOccupancyMin;
    int se_radius = kDefaultSeRadius;
  };

  std::string listen_addr = "127.0.0.1:8080";
  std::filesystem::path database_path;
  std::vector<SlideEntry> slides;
  std::map<std::string, int64_t> tokens;  // token -> person id
  Screening screening;
  DiscoveryConfig discovery;
  double hit_radius = kDefaultHitRadius;
  std::size_t tile_cache_capacity = TileCache::kDefaultCapacity;
};

/// Relative paths in the document are resolved against `base_dir`.
/// Throws ValidationError on missing or inconsistent fields.
ServiceConfig parse_service_config(std::string_view json_text,
                                   const std::filesystem::path& base_dir = {});
ServiceConfig load_service_config(const std::filesystem::path& path);

int64_t system_clock_ms();

/// Multi-user HTTP front end over the slides and the annotation store.
///
/// Blinding happens here: annotation listings are reduced to what the
/// requesting session's person may see before they are serialized. Every
/// label write is attributed to the session's person.
class Service {
 public:
  using Clock = std::function<int64_t()>;

  /// Opens all slides and the database. Throws on a bad container path or an
  /// unreadable database.
  explicit Service(ServiceConfig config, Clock clock = system_clock_ms);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket and returns the port (useful with port 0).
  /// Throws IoError when the address cannot be bound.
  int bind();
  /// Serves until stop(); bind() must have succeeded.
  void run();
  /// bind() + run() on a background thread.
  int start();
  /// Stops serving and writes the store back to the database file.
  void stop();
  void flush();

  int port() const;
  SharedStore& store();
  const ServiceConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace slideanno
