#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "slideanno/raster.hpp"

namespace slideanno {

struct TileKey {
  uint64_t slide = 0;
  int level = 0;
  int64_t col = 0;
  int64_t row = 0;

  friend bool operator==(const TileKey&, const TileKey&) = default;
};

struct TileKeyHash {
  std::size_t operator()(const TileKey& k) const noexcept {
    uint64_t h = 1469598103934665603ull;
    for (uint64_t v : {k.slide, static_cast<uint64_t>(k.level),
                       static_cast<uint64_t>(k.col), static_cast<uint64_t>(k.row)}) {
      h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

/// Fixed-capacity LRU cache of decoded tiles, safe for concurrent use.
///
/// A miss runs the loader outside the lock, so two threads racing on the same
/// key may both decode it; the first insert wins and both get equal tiles.
class TileCache {
 public:
  using TilePtr = std::shared_ptr<const Raster>;

  static constexpr std::size_t kDefaultCapacity = 512;

  explicit TileCache(std::size_t capacity = kDefaultCapacity);

  TilePtr get_or_load(const TileKey& key, const std::function<Raster()>& loader);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const;
  uint64_t hits() const;
  uint64_t misses() const;
  void clear();

 private:
  using Entry = std::pair<TileKey, TilePtr>;

  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<Entry> lru_;  // front = most recently used
  std::unordered_map<TileKey, std::list<Entry>::iterator, TileKeyHash> index_;
  uint64_t hits_ = 0;
  uint64_t misses_ = 0;
};

}  // namespace slideanno
