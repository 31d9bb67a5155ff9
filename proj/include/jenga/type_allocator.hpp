// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "jenga/lcm_allocator.hpp"

namespace jenga {

inline constexpr uint64_t kNoRequest = UINT64_MAX;

enum class SmallPageState : uint8_t { kEmpty, kEvictable, kUsed };

struct SmallPageId {
  // First large page of the owning unit, plus the slot within it.
  LargePageId large;
  uint32_t slot = 0;

  friend bool operator==(const SmallPageId& a, const SmallPageId& b) {
    return a.large == b.large && a.slot == b.slot;
  }
  friend auto operator<=>(const SmallPageId& a, const SmallPageId& b) {
    return std::tie(a.large.index, a.slot) <=> std::tie(b.large.index, b.slot);
  }
};

struct SmallPageRecord {
  SmallPageState state = SmallPageState::kEmpty;
  uint64_t associated_request = kNoRequest;
  uint64_t last_access = 0;
  uint64_t prefix_length = 0;
  uint64_t cache_key = 0;
  bool has_cache_key = false;
};

// Geometry of one layer group inside a shared pool. Exactly one of
// slots_per_large / large_pages_per_small exceeds 1:
//   - compatible page >= small page: several slots per large page
//   - compatible page <  small page: a small page spans several large pages
struct GroupGeometry {
  std::string group_name;
  uint64_t small_page_bytes = 0;
  uint32_t slots_per_large = 1;
  uint32_t large_pages_per_small = 1;
  uint64_t padding_bytes = 0;  // per unit, unusable (MAX-page layouts)
};

struct FragmentationReport {
  uint64_t used_bytes = 0;
  uint64_t evictable_bytes = 0;
  uint64_t empty_stranded_bytes = 0;
};

// Candidate for large-page (unit) eviction. Orders by earliest timestamp,
// then highest contained prefix length, then lowest page index.
struct UnitEvictionCandidate {
  uint64_t lru_timestamp = 0;
  uint64_t max_prefix_length = 0;
  uint32_t first_index = 0;

  bool better_than(const UnitEvictionCandidate& other) const {
    if (lru_timestamp != other.lru_timestamp)
      return lru_timestamp < other.lru_timestamp;
    if (max_prefix_length != other.max_prefix_length)
      return max_prefix_length > other.max_prefix_length;
    return first_index < other.first_index;
  }
};

// Second-level allocator for one layer group: carves owned large pages into
// small pages, tracks the Empty/Evictable/Used state machine, and keeps
// allocation request-aware so completed requests release whole large pages.
class TypeAllocator {
 public:
  TypeAllocator(GroupGeometry geometry, LargePagePool* pool);

  const GroupGeometry& geometry() const { return geometry_; }
  const std::string& name() const { return geometry_.group_name; }

  // Step 1: lowest-index empty page already associated with the request.
  std::optional<SmallPageId> try_allocate_associated(uint64_t request);

  // Steps 2-3 second half: take ownership of fresh large pages from the
  // pool (large_pages_per_small of them), associate every slot with the
  // request and allocate the first. Fails when the pool lacks pages.
  std::optional<SmallPageId> try_allocate_from_new_unit(uint64_t request);

  // Step 4: lowest-index empty page regardless of association; the page is
  // re-associated to the requesting request.
  std::optional<SmallPageId> try_allocate_any(uint64_t request);

  // Step 5 candidate: LRU evictable page (earliest last access, then
  // highest prefix length, then lowest index).
  std::optional<SmallPageId> lru_evictable_small() const;

  // Evictable -> Empty. Returns the cache key the engine must unregister.
  uint64_t evict_small(SmallPageId id);

  // Empty -> Used for the given request.
  void allocate_slot(SmallPageId id, uint64_t request);

  // Used -> Empty (no key) or Used -> Evictable (key present). When every
  // slot of the owning unit is empty, the unit's large pages return to the
  // pool. Throws InvariantError when the page is not Used (double free).
  void free(SmallPageId id, std::optional<uint64_t> cache_key);

  // Evictable -> Used (prefix-cache hit reuse).
  void pin(SmallPageId id, uint64_t request);

  void touch(SmallPageId id, uint64_t step);
  void set_prefix_length(SmallPageId id, uint64_t length);

  const SmallPageRecord& record(SmallPageId id) const;
  bool tracks(SmallPageId id) const;

  // Units whose every slot is evictable, as large-page eviction candidates.
  std::vector<UnitEvictionCandidate> fully_evictable_units() const;

  // Large-page eviction: every slot Evictable -> Empty; the unit's pages
  // return to the pool. Returns the cache keys to unregister.
  std::vector<uint64_t> clear_unit(uint32_t first_index);

  FragmentationReport fragmentation_report() const;

  uint64_t used_pages() const { return used_count_; }
  uint64_t evictable_pages() const { return evictable_lru_.size(); }
  uint64_t empty_pages() const { return empty_slots_.size(); }
  uint64_t owned_units() const { return units_.size(); }
  bool has_associated_empty(uint64_t request) const {
    auto it = empty_by_request_.find(request);
    return it != empty_by_request_.end() && !it->second.empty();
  }

  // Every (unit, slot) pair currently owned, lowest global index first.
  std::vector<SmallPageId> all_pages() const;

  // Debug sweep of internal index consistency.
  void check_invariants() const;

 private:
  struct Unit {
    std::vector<LargePageId> span;
    std::vector<SmallPageRecord> slots;
    uint32_t empty_count = 0;
    uint32_t evictable_count = 0;
  };

  uint64_t global_index(uint32_t first_index, uint32_t slot) const {
    return static_cast<uint64_t>(first_index) * geometry_.slots_per_large + slot;
  }
  SmallPageId from_global(uint64_t g) const {
    return SmallPageId{
        LargePageId{static_cast<uint32_t>(g / geometry_.slots_per_large)},
        static_cast<uint32_t>(g % geometry_.slots_per_large)};
  }
  Unit& unit_of(SmallPageId id);
  const Unit& unit_of(SmallPageId id) const;
  SmallPageRecord& mutable_record(SmallPageId id);

  void index_on_empty(SmallPageId id, const SmallPageRecord& rec);
  void unindex_on_empty(SmallPageId id, const SmallPageRecord& rec);
  void release_unit(uint32_t first_index);

  GroupGeometry geometry_;
  LargePagePool* pool_;
  std::map<uint32_t, Unit> units_;  // keyed by first large-page index

  // (last_access, inverted prefix length, global index): begin() is the
  // eviction front.
  std::set<std::tuple<uint64_t, uint64_t, uint64_t>> evictable_lru_;
  std::set<uint64_t> empty_slots_;  // global indices
  std::unordered_map<uint64_t, std::set<uint64_t>> empty_by_request_;
  uint64_t used_count_ = 0;
};

}  // namespace jenga
