// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#include "jenga/lcm_allocator.hpp"

namespace jenga {

LargePagePool::LargePagePool(uint64_t capacity_bytes, uint64_t large_page_bytes)
    : large_page_bytes_(large_page_bytes) {
  if (large_page_bytes == 0) {
    throw ConfigError("large page size must be positive");
  }
  const uint64_t count = capacity_bytes / large_page_bytes;
  if (count > UINT32_MAX) {
    throw ConfigError("pool would exceed the page index space");
  }
  reserved_remainder_ = capacity_bytes - count * large_page_bytes;
  owners_.resize(count);
  for (uint32_t i = 0; i < count; ++i) free_list_.insert(i);
}

std::optional<LargePageId> LargePagePool::request_large_page(
    const std::string& owner) {
  if (free_list_.empty()) return std::nullopt;
  JENGA_CHECK(!owner.empty(), "large page owner must be named");
  const uint32_t index = *free_list_.begin();
  free_list_.erase(free_list_.begin());
  owners_[index] = owner;
  return LargePageId{index};
}

void LargePagePool::return_large_page(LargePageId id) {
  JENGA_CHECK(id.index < owners_.size(), "large page index out of range");
  if (owners_[id.index].empty()) {
    throw InvariantError("double free of large page " +
                         std::to_string(id.index));
  }
  owners_[id.index].clear();
  const bool inserted = free_list_.insert(id.index).second;
  JENGA_CHECK(inserted, "large page already on free list");
}

bool LargePagePool::is_free(LargePageId id) const {
  JENGA_CHECK(id.index < owners_.size(), "large page index out of range");
  return owners_[id.index].empty();
}

const std::string& LargePagePool::owner_of(LargePageId id) const {
  JENGA_CHECK(id.index < owners_.size(), "large page index out of range");
  return owners_[id.index];
}

void LargePagePool::check_conservation() const {
  uint32_t owned = 0;
  for (uint32_t i = 0; i < owners_.size(); ++i) {
    const bool free = owners_[i].empty();
    JENGA_CHECK(free == (free_list_.count(i) == 1),
                "free list disagrees with ownership");
    if (!free) ++owned;
  }
  JENGA_CHECK(owned + free_list_.size() == owners_.size(),
              "pool pages leaked");
}

}  // namespace jenga
