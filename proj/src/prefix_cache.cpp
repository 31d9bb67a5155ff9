// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#include "jenga/prefix_cache.hpp"

#include <algorithm>

namespace jenga {

uint64_t block_chain_salt(const std::string& group_name) {
  return mix64(hash_str(group_name), 0x6a656e6761ULL);
}

uint64_t chain_block_key(uint64_t parent_key,
                         const std::vector<uint64_t>& tokens) {
  uint64_t h = parent_key;
  for (uint64_t t : tokens) h = mix64(h, t);
  return h;
}

PrefixRangeSet get_possible_prefix(const HitVector& is_hit,
                                   const LayerPolicy& policy) {
  return policy.possible_prefixes(is_hit);
}

PrefixRangeSet stored_to_global_prefixes(
    const PrefixRangeSet& stored_valid,
    const std::vector<uint64_t>& stored_positions, uint64_t sequence_length) {
  PrefixRangeSet out;
  if (sequence_length == 0) return out;
  const uint64_t m = stored_positions.size();
  // Global prefix p contains stored tokens 1..c(p) where c is a step
  // function jumping at each stored position; p is valid when c(p) is 0
  // (nothing required yet) or a valid stored prefix.
  uint64_t prev_emitted_hi = 0;
  for (uint64_t count = 0; count <= m; ++count) {
    const uint64_t lo = count == 0 ? 1 : stored_positions[count - 1];
    const uint64_t hi =
        count == m ? sequence_length : stored_positions[count] - 1;
    if (lo > hi) continue;  // adjacent stored positions
    if (count == 0 || stored_valid.contains(count)) {
      JENGA_CHECK(lo > prev_emitted_hi, "stored positions out of order");
      out.append_range(lo, hi);
      prev_emitted_hi = hi;
    }
  }
  return out;
}

uint64_t find_longest_common_prefix(
    const std::vector<PrefixRangeSet>& per_group) {
  if (per_group.empty()) return 0;
  PrefixRangeSet acc = per_group.front();
  for (size_t i = 1; i < per_group.size(); ++i) {
    acc = PrefixRangeSet::intersect(acc, per_group[i]);
  }
  return acc.max_value();
}

void PrefixCache::register_block(size_t group, const BlockContent& content,
                                 SmallPageId page) {
  JENGA_CHECK(group < by_group_.size(), "group index out of range");
  by_group_[group][content.key].push_back(Entry{content, page});
}

void PrefixCache::unregister(size_t group, uint64_t key, SmallPageId page) {
  JENGA_CHECK(group < by_group_.size(), "group index out of range");
  auto& table = by_group_[group];
  auto it = table.find(key);
  if (it == table.end()) return;
  auto& entries = it->second;
  entries.erase(std::remove_if(entries.begin(), entries.end(),
                               [&](const Entry& e) { return e.page == page; }),
                entries.end());
  if (entries.empty()) table.erase(it);
}

std::optional<SmallPageId> PrefixCache::find(size_t group,
                                             const BlockContent& content) const {
  JENGA_CHECK(group < by_group_.size(), "group index out of range");
  const auto& table = by_group_[group];
  auto it = table.find(content.key);
  if (it == table.end()) return std::nullopt;
  for (const Entry& e : it->second) {
    if (e.content.matches(content)) return e.page;
  }
  return std::nullopt;
}

uint64_t PrefixCache::entries(size_t group) const {
  JENGA_CHECK(group < by_group_.size(), "group index out of range");
  uint64_t n = 0;
  for (const auto& [key, entries] : by_group_[group]) n += entries.size();
  return n;
}

uint64_t PrefixCache::total_entries() const {
  uint64_t n = 0;
  for (size_t g = 0; g < by_group_.size(); ++g) n += entries(g);
  return n;
}

}  // namespace jenga
