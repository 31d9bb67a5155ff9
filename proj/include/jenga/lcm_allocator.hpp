// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "jenga/util.hpp"

namespace jenga {

struct LargePageId {
  uint32_t index = UINT32_MAX;

  bool valid() const { return index != UINT32_MAX; }
  friend bool operator==(LargePageId a, LargePageId b) {
    return a.index == b.index;
  }
  friend auto operator<=>(LargePageId a, LargePageId b) {
    return a.index <=> b.index;
  }
};

// First-level allocator: a pool of compatible-size pages handed out to
// per-type allocators and reclaimed when all their small pages empty out.
class LargePagePool {
 public:
  LargePagePool(uint64_t capacity_bytes, uint64_t large_page_bytes);

  // Lowest-index free page, or nullopt when the free list is empty.
  std::optional<LargePageId> request_large_page(const std::string& owner);

  // Caller contract: all small pages inside `id` are empty.
  // Throws InvariantError on double free.
  void return_large_page(LargePageId id);

  bool is_free(LargePageId id) const;
  const std::string& owner_of(LargePageId id) const;

  uint32_t num_pages() const { return static_cast<uint32_t>(owners_.size()); }
  uint32_t num_free() const { return static_cast<uint32_t>(free_list_.size()); }
  uint32_t num_owned() const { return num_pages() - num_free(); }
  uint64_t large_page_bytes() const { return large_page_bytes_; }
  uint64_t free_bytes() const { return num_free() * large_page_bytes_; }
  // Capacity tail smaller than one page; never allocated.
  uint64_t reserved_remainder_bytes() const { return reserved_remainder_; }

  // Debug invariant: free list and owned set partition the pool.
  void check_conservation() const;

 private:
  uint64_t large_page_bytes_ = 0;
  uint64_t reserved_remainder_ = 0;
  std::vector<std::string> owners_;  // empty string = free
  std::set<uint32_t> free_list_;     // ordered: lowest index first
};

}  // namespace jenga
