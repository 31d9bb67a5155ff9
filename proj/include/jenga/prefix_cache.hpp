// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "jenga/layer_policies.hpp"
#include "jenga/range_set.hpp"
#include "jenga/type_allocator.hpp"

namespace jenga {

// Content identity of one cached block: chained hash over the parent block
// key and this block's token ids. Hash collisions are resolved by comparing
// the stored token span and parent key, so they cost a lookup, never a
// wrong hit.
struct BlockContent {
  uint64_t key = 0;
  uint64_t parent_key = 0;
  std::vector<uint64_t> tokens;

  bool matches(const BlockContent& other) const {
    return key == other.key && parent_key == other.parent_key &&
           tokens == other.tokens;
  }
};

// Chain salt for the first block of a group.
uint64_t block_chain_salt(const std::string& group_name);

// Key of the block following `parent` and containing `tokens`.
uint64_t chain_block_key(uint64_t parent_key,
                         const std::vector<uint64_t>& tokens);

// Whether each stored token of a request is backed by a cached block.
// Index = stored ordinal - 1.
using HitVector = std::vector<bool>;

// Valid prefix lengths for one group: delegates the hit rule to the policy.
PrefixRangeSet get_possible_prefix(const HitVector& is_hit,
                                   const LayerPolicy& policy);

// Maps a valid set on a group's stored axis to global prefix lengths, given
// the global positions this group stores. Prefixes containing none of the
// group's tokens are unconstrained.
PrefixRangeSet stored_to_global_prefixes(const PrefixRangeSet& stored_valid,
                                         const std::vector<uint64_t>& stored_positions,
                                         uint64_t sequence_length);

// Longest prefix valid in every group's global set; 0 when none.
uint64_t find_longest_common_prefix(const std::vector<PrefixRangeSet>& per_group);

// Content-keyed index over evictable pages, one namespace per group.
class PrefixCache {
 public:
  explicit PrefixCache(size_t num_groups) : by_group_(num_groups) {}

  void register_block(size_t group, const BlockContent& content,
                      SmallPageId page);
  // Removes the entry backed by `page`; tolerates keys already dropped so
  // eviction paths can unregister unconditionally.
  void unregister(size_t group, uint64_t key, SmallPageId page);

  // Verified lookup: the cached block whose content matches, if any.
  std::optional<SmallPageId> find(size_t group,
                                  const BlockContent& content) const;

  uint64_t entries(size_t group) const;
  uint64_t total_entries() const;

 private:
  struct Entry {
    BlockContent content;
    SmallPageId page;
  };
  std::vector<std::unordered_map<uint64_t, std::vector<Entry>>> by_group_;
};

}  // namespace jenga
