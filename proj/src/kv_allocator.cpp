// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#include "jenga/kv_allocator.hpp"

#include <algorithm>
#include <numeric>

namespace jenga {

const char* alloc_strategy_name(AllocStrategy s) {
  switch (s) {
    case AllocStrategy::kJenga:
      return "jenga";
    case AllocStrategy::kUniform:
      return "uniform";
    case AllocStrategy::kStaticPartition:
      return "static";
    case AllocStrategy::kMaxPage:
      return "max_page";
    case AllocStrategy::kGcdPage:
      return "gcd_page";
  }
  return "?";
}

AllocStrategy alloc_strategy_from_name(const std::string& name) {
  if (name == "jenga") return AllocStrategy::kJenga;
  if (name == "uniform") return AllocStrategy::kUniform;
  if (name == "static") return AllocStrategy::kStaticPartition;
  if (name == "max_page") return AllocStrategy::kMaxPage;
  if (name == "gcd_page") return AllocStrategy::kGcdPage;
  throw ConfigError("unknown strategy '" + name + "'");
}

EngineGeometry build_geometry(const ModelSpec& spec, AllocStrategy strategy,
                              uint64_t budget_bytes,
                              const std::vector<double>& static_ratios) {
  spec.validate();
  if (budget_bytes == 0) throw ConfigError("memory budget must be positive");
  EngineGeometry geo;

  if (strategy == AllocStrategy::kUniform) {
    for (const auto& g : spec.groups) {
      if (g.tokens_per_page != 1) {
        throw ConfigError(
            "uniform strategy requires tokens_per_page=1 in every group");
      }
    }
    LayerGroupSpec merged;
    merged.name = "all";
    merged.kind = LayerKind::kFullAttention;
    merged.num_layers = 1;
    merged.bytes_per_token_per_layer =
        compatible_page_size(spec, PageSizeStrategy::kUniform);
    geo.groups.push_back(merged);
    geo.merged = true;
    geo.page_geometry.push_back(
        GroupGeometry{"all", merged.bytes_per_token_per_layer, 1, 1, 0});
    geo.pool_of_group.push_back(0);
    geo.pool_capacity_bytes.push_back(budget_bytes);
    geo.pool_page_bytes.push_back(merged.bytes_per_token_per_layer);
    return geo;
  }

  geo.groups = spec.groups;
  switch (strategy) {
    case AllocStrategy::kJenga: {
      const uint64_t page = compatible_page_size(spec, PageSizeStrategy::kLcm);
      for (const auto& g : spec.groups) {
        const uint64_t small = small_page_size(g);
        JENGA_CHECK(page % small == 0, "LCM page not divisible by small page");
        geo.page_geometry.push_back(GroupGeometry{
            g.name, small, static_cast<uint32_t>(page / small), 1, 0});
        geo.pool_of_group.push_back(0);
      }
      geo.pool_capacity_bytes.push_back(budget_bytes);
      geo.pool_page_bytes.push_back(page);
      break;
    }
    case AllocStrategy::kMaxPage: {
      const uint64_t page = compatible_page_size(spec, PageSizeStrategy::kMax);
      for (const auto& g : spec.groups) {
        const uint64_t small = small_page_size(g);
        geo.page_geometry.push_back(
            GroupGeometry{g.name, small, 1, 1, page - small});
        geo.pool_of_group.push_back(0);
      }
      geo.pool_capacity_bytes.push_back(budget_bytes);
      geo.pool_page_bytes.push_back(page);
      break;
    }
    case AllocStrategy::kGcdPage: {
      const uint64_t page = compatible_page_size(spec, PageSizeStrategy::kGcd);
      for (const auto& g : spec.groups) {
        const uint64_t small = small_page_size(g);
        JENGA_CHECK(small % page == 0, "small page not divisible by GCD page");
        geo.page_geometry.push_back(GroupGeometry{
            g.name, small, 1, static_cast<uint32_t>(small / page), 0});
        geo.pool_of_group.push_back(0);
      }
      geo.pool_capacity_bytes.push_back(budget_bytes);
      geo.pool_page_bytes.push_back(page);
      break;
    }
    case AllocStrategy::kStaticPartition: {
      std::vector<double> ratios = static_ratios;
      if (ratios.empty()) {
        ratios.assign(spec.groups.size(), 1.0 / spec.groups.size());
      }
      if (ratios.size() != spec.groups.size()) {
        throw ConfigError("static partition needs one ratio per group");
      }
      double sum = std::accumulate(ratios.begin(), ratios.end(), 0.0);
      if (sum <= 0) throw ConfigError("static partition ratios must sum > 0");
      uint64_t assigned = 0;
      for (size_t i = 0; i < spec.groups.size(); ++i) {
        const auto& g = spec.groups[i];
        const uint64_t small = small_page_size(g);
        const uint64_t sub_budget =
            static_cast<uint64_t>(budget_bytes * (ratios[i] / sum));
        geo.page_geometry.push_back(GroupGeometry{g.name, small, 1, 1, 0});
        geo.pool_of_group.push_back(i);
        geo.pool_capacity_bytes.push_back(sub_budget);
        geo.pool_page_bytes.push_back(small);
        assigned += sub_budget;
      }
      geo.external_remainder_bytes = budget_bytes - assigned;
      break;
    }
    case AllocStrategy::kUniform:
      break;  // handled above
  }
  return geo;
}

KvAllocator::KvAllocator(const ModelSpec& spec, AllocStrategy strategy,
                         uint64_t budget_bytes,
                         const std::vector<double>& static_ratios)
    : geometry_(build_geometry(spec, strategy, budget_bytes, static_ratios)),
      budget_bytes_(budget_bytes),
      cache_(geometry_.groups.size()) {
  for (size_t p = 0; p < geometry_.pool_capacity_bytes.size(); ++p) {
    pools_.push_back(std::make_unique<LargePagePool>(
        geometry_.pool_capacity_bytes[p], geometry_.pool_page_bytes[p]));
  }
  for (size_t g = 0; g < geometry_.groups.size(); ++g) {
    types_.push_back(std::make_unique<TypeAllocator>(
        geometry_.page_geometry[g],
        pools_[geometry_.pool_of_group[g]].get()));
    policies_.emplace_back(geometry_.groups[g]);
  }
}

std::optional<AllocResult> KvAllocator::allocate(size_t g, uint64_t request) {
  JENGA_CHECK(g < types_.size(), "group index out of range");
  TypeAllocator& ta = *types_[g];
  const size_t pool_index = geometry_.pool_of_group[g];

  if (request_aware_) {
    if (auto id = ta.try_allocate_associated(request)) {
      alloc_step_counts_[1]++;
      return AllocResult{*id, 1};
    }
  } else {
    // FIFO-slot baseline: first free slot of the type, association ignored.
    if (auto id = ta.try_allocate_any(request)) {
      alloc_step_counts_[1]++;
      return AllocResult{*id, 1};
    }
  }
  if (auto id = ta.try_allocate_from_new_unit(request)) {
    alloc_step_counts_[2]++;
    return AllocResult{*id, 2};
  }
  const uint32_t span = ta.geometry().large_pages_per_small;
  while (pools_[pool_index]->num_free() < span) {
    if (!evict_lru_large_page(pool_index)) break;
  }
  if (auto id = ta.try_allocate_from_new_unit(request)) {
    alloc_step_counts_[3]++;
    return AllocResult{*id, 3};
  }
  if (request_aware_) {
    if (auto id = ta.try_allocate_any(request)) {
      alloc_step_counts_[4]++;
      return AllocResult{*id, 4};
    }
  }
  if (auto sid = ta.lru_evictable_small()) {
    const uint64_t key = ta.evict_small(*sid);
    cache_.unregister(g, key, *sid);
    ta.allocate_slot(*sid, request);
    alloc_step_counts_[5]++;
    return AllocResult{*sid, 5};
  }
  return std::nullopt;
}

void KvAllocator::free(size_t g, SmallPageId page,
                       const std::optional<BlockContent>& cached) {
  JENGA_CHECK(g < types_.size(), "group index out of range");
  if (cached.has_value()) {
    types_[g]->free(page, cached->key);
    cache_.register_block(g, *cached, page);
  } else {
    types_[g]->free(page, std::nullopt);
  }
}

void KvAllocator::pin(size_t g, SmallPageId page, uint64_t request) {
  JENGA_CHECK(g < types_.size(), "group index out of range");
  const auto& rec = types_[g]->record(page);
  JENGA_CHECK(rec.has_cache_key, "pin of a page without cache key");
  cache_.unregister(g, rec.cache_key, page);
  types_[g]->pin(page, request);
}

std::optional<LargePageId> KvAllocator::evict_lru_large_page(
    size_t pool_index) {
  std::optional<UnitEvictionCandidate> best;
  size_t best_group = 0;
  for (size_t g = 0; g < types_.size(); ++g) {
    if (geometry_.pool_of_group[g] != pool_index) continue;
    for (const auto& c : types_[g]->fully_evictable_units()) {
      if (!best.has_value() || c.better_than(*best)) {
        best = c;
        best_group = g;
      }
    }
  }
  if (!best.has_value()) return std::nullopt;
  TypeAllocator& ta = *types_[best_group];
  const std::vector<uint64_t> keys = ta.clear_unit(best->first_index);
  for (uint32_t s = 0; s < keys.size(); ++s) {
    cache_.unregister(best_group, keys[s],
                      SmallPageId{LargePageId{best->first_index}, s});
  }
  return LargePageId{best->first_index};
}

LookupResult KvAllocator::lookup_and_pin(
    const std::vector<GroupLookupInput>& inputs, uint64_t sequence_length,
    uint64_t request) {
  JENGA_CHECK(inputs.size() == num_groups(), "one lookup input per group");
  LookupResult out;
  out.pinned.resize(num_groups());
  if (sequence_length == 0) return out;

  std::vector<std::vector<bool>> hits(num_groups());
  std::vector<PrefixRangeSet> global_sets;
  global_sets.reserve(num_groups());
  for (size_t g = 0; g < num_groups(); ++g) {
    const auto& in = inputs[g];
    const uint64_t m = in.stored_positions.size();
    std::vector<bool> is_hit(m, false);
    uint64_t ordinal = 0;
    for (size_t b = 0; b < in.blocks.size(); ++b) {
      const uint64_t end = in.block_end_ordinal[b];
      JENGA_CHECK(end <= m, "block covers unknown ordinals");
      if (cache_.find(g, in.blocks[b]).has_value()) {
        for (uint64_t i = ordinal; i < end; ++i) is_hit[i] = true;
      }
      ordinal = end;
    }
    hits[g] = std::move(is_hit);
    global_sets.push_back(stored_to_global_prefixes(
        policies_[g].possible_prefixes(hits[g]), in.stored_positions,
        sequence_length));
  }

  const uint64_t p = find_longest_common_prefix(global_sets);
  if (p == 0) return out;
  out.hit_length = p;

  for (size_t g = 0; g < num_groups(); ++g) {
    const auto& in = inputs[g];
    const uint64_t m = static_cast<uint64_t>(
        std::upper_bound(in.stored_positions.begin(),
                         in.stored_positions.end(), p) -
        in.stored_positions.begin());
    if (m == 0) continue;
    bool defined = true;
    const std::vector<uint64_t> required =
        policies_[g].required_tokens(m, &defined);
    JENGA_CHECK(defined, "common prefix invalid for a group policy");
    // Collapse required ordinals to their covering blocks.
    uint64_t last_block = UINT64_MAX;
    for (uint64_t ord : required) {
      const uint64_t b = static_cast<uint64_t>(
          std::lower_bound(in.block_end_ordinal.begin(),
                           in.block_end_ordinal.end(), ord) -
          in.block_end_ordinal.begin());
      if (b == last_block) continue;
      last_block = b;
      JENGA_CHECK(b < in.blocks.size(), "required ordinal beyond blocks");
      auto page = cache_.find(g, in.blocks[b]);
      JENGA_CHECK(page.has_value(), "hit block vanished before pinning");
      pin(g, *page, request);
      out.pinned[g].emplace_back(b, *page);
    }
  }
  return out;
}

uint64_t KvAllocator::unallocated_bytes() const {
  uint64_t n = 0;
  for (const auto& p : pools_) n += p->free_bytes();
  return n;
}

uint64_t KvAllocator::reserved_remainder_bytes() const {
  uint64_t n = geometry_.external_remainder_bytes;
  for (const auto& p : pools_) n += p->reserved_remainder_bytes();
  return n;
}

uint64_t KvAllocator::evictable_bytes() const {
  uint64_t n = 0;
  for (const auto& ta : types_) {
    n += ta->evictable_pages() * ta->geometry().small_page_bytes;
  }
  return n;
}

uint64_t KvAllocator::stranded_bytes() const {
  uint64_t n = 0;
  for (const auto& ta : types_) {
    const auto& g = ta->geometry();
    n += ta->empty_pages() * g.small_page_bytes +
         ta->owned_units() * g.padding_bytes;
  }
  return n;
}

void KvAllocator::check_invariants() const {
  for (const auto& p : pools_) p->check_conservation();
  for (const auto& ta : types_) ta->check_invariants();
  // Every byte is in exactly one bucket.
  uint64_t total = unallocated_bytes() + reserved_remainder_bytes();
  for (const auto& ta : types_) {
    const auto& g = ta->geometry();
    total += (ta->used_pages() + ta->evictable_pages() + ta->empty_pages()) *
                 g.small_page_bytes +
             ta->owned_units() * g.padding_bytes;
  }
  JENGA_CHECK(total == budget_bytes_, "byte conservation violated");
}

}  // namespace jenga
