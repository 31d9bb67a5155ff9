// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#include "jenga/type_allocator.hpp"

#include <algorithm>

namespace jenga {

namespace {
uint64_t invert_prefix(uint64_t prefix_length) {
  return UINT64_MAX - prefix_length;
}
}  // namespace

TypeAllocator::TypeAllocator(GroupGeometry geometry, LargePagePool* pool)
    : geometry_(std::move(geometry)), pool_(pool) {
  JENGA_CHECK(pool_ != nullptr, "type allocator needs a pool");
  JENGA_CHECK(geometry_.slots_per_large >= 1, "slots_per_large must be >= 1");
  JENGA_CHECK(geometry_.large_pages_per_small >= 1,
              "large_pages_per_small must be >= 1");
  JENGA_CHECK(geometry_.slots_per_large == 1 ||
                  geometry_.large_pages_per_small == 1,
              "unit geometry must not split both ways");
}

TypeAllocator::Unit& TypeAllocator::unit_of(SmallPageId id) {
  auto it = units_.find(id.large.index);
  JENGA_CHECK(it != units_.end(), "small page outside owned large pages");
  return it->second;
}

const TypeAllocator::Unit& TypeAllocator::unit_of(SmallPageId id) const {
  auto it = units_.find(id.large.index);
  JENGA_CHECK(it != units_.end(), "small page outside owned large pages");
  return it->second;
}

SmallPageRecord& TypeAllocator::mutable_record(SmallPageId id) {
  Unit& u = unit_of(id);
  JENGA_CHECK(id.slot < u.slots.size(), "slot out of range");
  return u.slots[id.slot];
}

const SmallPageRecord& TypeAllocator::record(SmallPageId id) const {
  const Unit& u = unit_of(id);
  JENGA_CHECK(id.slot < u.slots.size(), "slot out of range");
  return u.slots[id.slot];
}

bool TypeAllocator::tracks(SmallPageId id) const {
  auto it = units_.find(id.large.index);
  return it != units_.end() && id.slot < it->second.slots.size();
}

void TypeAllocator::index_on_empty(SmallPageId id, const SmallPageRecord& rec) {
  const uint64_t g = global_index(id.large.index, id.slot);
  empty_slots_.insert(g);
  if (rec.associated_request != kNoRequest) {
    empty_by_request_[rec.associated_request].insert(g);
  }
}

void TypeAllocator::unindex_on_empty(SmallPageId id,
                                     const SmallPageRecord& rec) {
  const uint64_t g = global_index(id.large.index, id.slot);
  empty_slots_.erase(g);
  if (rec.associated_request != kNoRequest) {
    auto it = empty_by_request_.find(rec.associated_request);
    if (it != empty_by_request_.end()) {
      it->second.erase(g);
      if (it->second.empty()) empty_by_request_.erase(it);
    }
  }
}

std::optional<SmallPageId> TypeAllocator::try_allocate_associated(
    uint64_t request) {
  auto it = empty_by_request_.find(request);
  if (it == empty_by_request_.end() || it->second.empty()) return std::nullopt;
  const SmallPageId id = from_global(*it->second.begin());
  allocate_slot(id, request);
  return id;
}

std::optional<SmallPageId> TypeAllocator::try_allocate_from_new_unit(
    uint64_t request) {
  if (pool_->num_free() < geometry_.large_pages_per_small) return std::nullopt;
  Unit unit;
  unit.span.reserve(geometry_.large_pages_per_small);
  for (uint32_t i = 0; i < geometry_.large_pages_per_small; ++i) {
    auto page = pool_->request_large_page(geometry_.group_name);
    JENGA_CHECK(page.has_value(), "pool free count lied");
    unit.span.push_back(*page);
  }
  unit.slots.resize(geometry_.slots_per_large);
  unit.empty_count = geometry_.slots_per_large;
  for (auto& slot : unit.slots) slot.associated_request = request;

  const uint32_t first = unit.span.front().index;
  auto [it, inserted] = units_.emplace(first, std::move(unit));
  JENGA_CHECK(inserted, "unit already tracked");
  for (uint32_t s = 0; s < geometry_.slots_per_large; ++s) {
    index_on_empty(SmallPageId{LargePageId{first}, s}, it->second.slots[s]);
  }
  const SmallPageId id{LargePageId{first}, 0};
  allocate_slot(id, request);
  return id;
}

std::optional<SmallPageId> TypeAllocator::try_allocate_any(uint64_t request) {
  if (empty_slots_.empty()) return std::nullopt;
  const SmallPageId id = from_global(*empty_slots_.begin());
  allocate_slot(id, request);
  return id;
}

std::optional<SmallPageId> TypeAllocator::lru_evictable_small() const {
  if (evictable_lru_.empty()) return std::nullopt;
  return from_global(std::get<2>(*evictable_lru_.begin()));
}

uint64_t TypeAllocator::evict_small(SmallPageId id) {
  Unit& u = unit_of(id);
  SmallPageRecord& rec = u.slots[id.slot];
  JENGA_CHECK(rec.state == SmallPageState::kEvictable,
              "evict_small on a non-evictable page");
  JENGA_CHECK(rec.has_cache_key, "evictable page lost its cache key");
  const uint64_t key = rec.cache_key;
  evictable_lru_.erase({rec.last_access, invert_prefix(rec.prefix_length),
                        global_index(id.large.index, id.slot)});
  u.evictable_count--;
  rec.state = SmallPageState::kEmpty;
  rec.has_cache_key = false;
  rec.cache_key = 0;
  u.empty_count++;
  index_on_empty(id, rec);
  return key;
}

void TypeAllocator::allocate_slot(SmallPageId id, uint64_t request) {
  Unit& u = unit_of(id);
  SmallPageRecord& rec = u.slots[id.slot];
  JENGA_CHECK(rec.state == SmallPageState::kEmpty,
              "allocate_slot on a non-empty page");
  unindex_on_empty(id, rec);
  u.empty_count--;
  rec.state = SmallPageState::kUsed;
  rec.associated_request = request;
  rec.prefix_length = 0;
  used_count_++;
}

void TypeAllocator::free(SmallPageId id, std::optional<uint64_t> cache_key) {
  Unit& u = unit_of(id);
  SmallPageRecord& rec = u.slots[id.slot];
  if (rec.state != SmallPageState::kUsed) {
    throw InvariantError("double free of small page (group '" +
                         geometry_.group_name + "')");
  }
  used_count_--;
  if (cache_key.has_value()) {
    rec.state = SmallPageState::kEvictable;
    rec.cache_key = *cache_key;
    rec.has_cache_key = true;
    u.evictable_count++;
    evictable_lru_.insert({rec.last_access, invert_prefix(rec.prefix_length),
                           global_index(id.large.index, id.slot)});
    return;
  }
  rec.state = SmallPageState::kEmpty;
  rec.has_cache_key = false;
  u.empty_count++;
  index_on_empty(id, rec);
  if (u.empty_count == u.slots.size()) release_unit(id.large.index);
}

void TypeAllocator::pin(SmallPageId id, uint64_t request) {
  Unit& u = unit_of(id);
  SmallPageRecord& rec = u.slots[id.slot];
  JENGA_CHECK(rec.state == SmallPageState::kEvictable,
              "pin on a non-evictable page");
  evictable_lru_.erase({rec.last_access, invert_prefix(rec.prefix_length),
                        global_index(id.large.index, id.slot)});
  u.evictable_count--;
  rec.state = SmallPageState::kUsed;
  rec.has_cache_key = false;
  rec.cache_key = 0;
  rec.associated_request = request;
  used_count_++;
}

void TypeAllocator::touch(SmallPageId id, uint64_t step) {
  Unit& u = unit_of(id);
  SmallPageRecord& rec = u.slots[id.slot];
  if (rec.state == SmallPageState::kEvictable) {
    const uint64_t g = global_index(id.large.index, id.slot);
    evictable_lru_.erase({rec.last_access, invert_prefix(rec.prefix_length), g});
    rec.last_access = step;
    evictable_lru_.insert({rec.last_access, invert_prefix(rec.prefix_length), g});
  } else {
    rec.last_access = step;
  }
}

void TypeAllocator::set_prefix_length(SmallPageId id, uint64_t length) {
  Unit& u = unit_of(id);
  SmallPageRecord& rec = u.slots[id.slot];
  if (rec.state == SmallPageState::kEvictable) {
    const uint64_t g = global_index(id.large.index, id.slot);
    evictable_lru_.erase({rec.last_access, invert_prefix(rec.prefix_length), g});
    rec.prefix_length = length;
    evictable_lru_.insert({rec.last_access, invert_prefix(rec.prefix_length), g});
  } else {
    rec.prefix_length = length;
  }
}

void TypeAllocator::release_unit(uint32_t first_index) {
  auto it = units_.find(first_index);
  JENGA_CHECK(it != units_.end(), "release of an unowned unit");
  Unit& u = it->second;
  JENGA_CHECK(u.empty_count == u.slots.size(), "release of a non-empty unit");
  for (uint32_t s = 0; s < u.slots.size(); ++s) {
    unindex_on_empty(SmallPageId{LargePageId{first_index}, s}, u.slots[s]);
  }
  for (LargePageId page : u.span) pool_->return_large_page(page);
  units_.erase(it);
}

std::vector<UnitEvictionCandidate> TypeAllocator::fully_evictable_units()
    const {
  std::vector<UnitEvictionCandidate> out;
  for (const auto& [first, u] : units_) {
    if (u.evictable_count != u.slots.size()) continue;
    UnitEvictionCandidate c;
    c.first_index = first;
    for (const auto& slot : u.slots) {
      c.lru_timestamp = std::max(c.lru_timestamp, slot.last_access);
      c.max_prefix_length = std::max(c.max_prefix_length, slot.prefix_length);
    }
    out.push_back(c);
  }
  return out;
}

std::vector<uint64_t> TypeAllocator::clear_unit(uint32_t first_index) {
  auto it = units_.find(first_index);
  JENGA_CHECK(it != units_.end(), "clear of an unowned unit");
  Unit& u = it->second;
  JENGA_CHECK(u.evictable_count == u.slots.size(),
              "clear of a unit with non-evictable pages");
  std::vector<uint64_t> keys;
  keys.reserve(u.slots.size());
  for (uint32_t s = 0; s < u.slots.size(); ++s) {
    keys.push_back(evict_small(SmallPageId{LargePageId{first_index}, s}));
  }
  release_unit(first_index);
  return keys;
}

FragmentationReport TypeAllocator::fragmentation_report() const {
  FragmentationReport r;
  for (const auto& [first, u] : units_) {
    (void)first;
    for (const auto& slot : u.slots) {
      switch (slot.state) {
        case SmallPageState::kUsed:
          r.used_bytes += geometry_.small_page_bytes;
          break;
        case SmallPageState::kEvictable:
          r.evictable_bytes += geometry_.small_page_bytes;
          break;
        case SmallPageState::kEmpty:
          r.empty_stranded_bytes += geometry_.small_page_bytes;
          break;
      }
    }
    r.empty_stranded_bytes += geometry_.padding_bytes;
  }
  return r;
}

std::vector<SmallPageId> TypeAllocator::all_pages() const {
  std::vector<SmallPageId> out;
  for (const auto& [first, u] : units_) {
    for (uint32_t s = 0; s < u.slots.size(); ++s) {
      out.push_back(SmallPageId{LargePageId{first}, s});
    }
  }
  return out;
}

void TypeAllocator::check_invariants() const {
  uint64_t used = 0, evictable = 0, empty = 0;
  for (const auto& [first, u] : units_) {
    JENGA_CHECK(u.span.size() == geometry_.large_pages_per_small,
                "unit span size mismatch");
    JENGA_CHECK(u.slots.size() == geometry_.slots_per_large,
                "unit slot count mismatch");
    uint32_t unit_empty = 0, unit_evictable = 0;
    for (uint32_t s = 0; s < u.slots.size(); ++s) {
      const auto& rec = u.slots[s];
      const uint64_t g = global_index(first, s);
      switch (rec.state) {
        case SmallPageState::kUsed:
          ++used;
          JENGA_CHECK(rec.associated_request != kNoRequest,
                      "used page without request");
          JENGA_CHECK(!rec.has_cache_key, "used page holds a cache key");
          break;
        case SmallPageState::kEvictable:
          ++evictable;
          ++unit_evictable;
          JENGA_CHECK(rec.has_cache_key, "evictable page without cache key");
          JENGA_CHECK(evictable_lru_.count({rec.last_access,
                                            invert_prefix(rec.prefix_length),
                                            g}) == 1,
                      "evictable page missing from LRU index");
          break;
        case SmallPageState::kEmpty:
          ++empty;
          ++unit_empty;
          JENGA_CHECK(!rec.has_cache_key, "empty page holds a cache key");
          JENGA_CHECK(empty_slots_.count(g) == 1,
                      "empty page missing from index");
          break;
      }
    }
    JENGA_CHECK(unit_empty == u.empty_count, "unit empty count drifted");
    JENGA_CHECK(unit_evictable == u.evictable_count,
                "unit evictable count drifted");
    JENGA_CHECK(unit_empty < u.slots.size(), "fully-empty unit not released");
  }
  JENGA_CHECK(used == used_count_, "used count drifted");
  JENGA_CHECK(evictable == evictable_lru_.size(), "LRU index size drifted");
  JENGA_CHECK(empty == empty_slots_.size(), "empty index size drifted");
}

}  // namespace jenga
