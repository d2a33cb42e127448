#include "slideanno/tile_cache.hpp"

namespace slideanno {

TileCache::TileCache(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

TileCache::TilePtr TileCache::get_or_load(const TileKey& key,
                                          const std::function<Raster()>& loader) {
  {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(key); it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      ++hits_;
      return it->second->second;
    }
    ++misses_;
  }
  auto tile = std::make_shared<const Raster>(loader());
  std::lock_guard lock(mu_);
  if (auto it = index_.find(key); it != index_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
    return it->second->second;
  }
  lru_.emplace_front(key, tile);
  index_[key] = lru_.begin();
  while (lru_.size() > capacity_) {
    index_.erase(lru_.back().first);
    lru_.pop_back();
  }
  return tile;
}

std::size_t TileCache::size() const {
  std::lock_guard lock(mu_);
  return lru_.size();
}

uint64_t TileCache::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

uint64_t TileCache::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

void TileCache::clear() {
  std::lock_guard lock(mu_);
  lru_.clear();
  index_.clear();
}

}  // namespace slideanno
