// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "jenga/lcm_allocator.hpp"
#include "jenga/layer_policies.hpp"
#include "jenga/model_config.hpp"
#include "jenga/prefix_cache.hpp"
#include "jenga/type_allocator.hpp"

namespace jenga {

enum class AllocStrategy { kJenga, kUniform, kStaticPartition, kMaxPage, kGcdPage };

const char* alloc_strategy_name(AllocStrategy s);
AllocStrategy alloc_strategy_from_name(const std::string& name);

// Uniform collapses all layers into one allocation type; the other
// strategies keep per-group allocators and differ in the compatible page.
struct EngineGeometry {
  std::vector<LayerGroupSpec> groups;      // effective groups
  std::vector<GroupGeometry> page_geometry;
  std::vector<size_t> pool_of_group;
  std::vector<uint64_t> pool_capacity_bytes;
  std::vector<uint64_t> pool_page_bytes;
  bool merged = false;
  uint64_t external_remainder_bytes = 0;  // budget not assigned to any pool
};

EngineGeometry build_geometry(const ModelSpec& spec, AllocStrategy strategy,
                              uint64_t budget_bytes,
                              const std::vector<double>& static_ratios = {});

struct AllocResult {
  SmallPageId page;
  int step = 0;  // which of the five allocation steps satisfied it
};

// Request-visible lookup input for one group: the global positions it
// stores plus the chained block contents covering them.
struct GroupLookupInput {
  std::vector<uint64_t> stored_positions;
  std::vector<BlockContent> blocks;
  std::vector<uint64_t> block_end_ordinal;  // stored ordinal at each block end
};

struct LookupResult {
  uint64_t hit_length = 0;  // global prefix length
  // (block index, page) pinned per group.
  std::vector<std::vector<std::pair<uint64_t, SmallPageId>>> pinned;
};

// The allocator engine: one pool set, one type allocator per effective
// group, and the prefix-cache index that tracks evictable pages.
class KvAllocator {
 public:
  KvAllocator(const ModelSpec& spec, AllocStrategy strategy,
              uint64_t budget_bytes,
              const std::vector<double>& static_ratios = {});

  size_t num_groups() const { return geometry_.groups.size(); }
  const EngineGeometry& geometry() const { return geometry_; }
  const LayerGroupSpec& group(size_t g) const { return geometry_.groups[g]; }
  const LayerPolicy& policy(size_t g) const { return policies_[g]; }
  TypeAllocator& type_allocator(size_t g) { return *types_[g]; }
  const TypeAllocator& type_allocator(size_t g) const { return *types_[g]; }
  LargePagePool& pool_of(size_t g) { return *pools_[geometry_.pool_of_group[g]]; }
  PrefixCache& cache() { return cache_; }

  // The five-step allocation. nullopt = out of memory (caller preempts).
  // With request_aware disabled, association is ignored: the allocator
  // degenerates to a first-free-slot baseline for comparison runs.
  std::optional<AllocResult> allocate(size_t g, uint64_t request);

  // Used -> Empty/Evictable; registers cached content under the group.
  void free(size_t g, SmallPageId page,
            const std::optional<BlockContent>& cached);

  // Evictable -> Used for a running request (prefix hit).
  void pin(size_t g, SmallPageId page, uint64_t request);

  // LRU eviction of a fully evictable large page in the given pool, across
  // all groups the pool serves. Returns the freed page id.
  std::optional<LargePageId> evict_lru_large_page(size_t pool_index);

  LookupResult lookup_and_pin(const std::vector<GroupLookupInput>& inputs,
                              uint64_t sequence_length, uint64_t request);

  void set_request_aware(bool on) { request_aware_ = on; }

  uint64_t budget_bytes() const { return budget_bytes_; }
  uint64_t unallocated_bytes() const;
  uint64_t reserved_remainder_bytes() const;
  uint64_t evictable_bytes() const;
  uint64_t stranded_bytes() const;  // empty slots + padding in owned units

  const std::array<uint64_t, 6>& alloc_step_counts() const {
    return alloc_step_counts_;
  }

  void check_invariants() const;

 private:
  EngineGeometry geometry_;
  uint64_t budget_bytes_ = 0;
  bool request_aware_ = true;
  std::vector<std::unique_ptr<LargePagePool>> pools_;
  std::vector<std::unique_ptr<TypeAllocator>> types_;
  std::vector<LayerPolicy> policies_;
  PrefixCache cache_;
  std::array<uint64_t, 6> alloc_step_counts_{};  // index 1..5
};

}  // namespace jenga
